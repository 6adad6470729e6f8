"""Binary PPM images and equirectangular sky lookups."""

from __future__ import annotations

import numpy as np

from . import _kernels as K


class PPMError(ValueError):
    pass


class MalformedHeader(PPMError):
    pass


class UnsupportedMaxval(PPMError):
    pass


class TruncatedPixelData(PPMError):
    pass


class ImageBuffer:
    """Row-major 8-bit RGB image; row 0 is the top of the picture."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.ascontiguousarray(pixels, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty (height, width, 3) array, got {arr.shape}")
        arr.flags.writeable = False
        self.pixels = arr

    @classmethod
    def blank(cls, width, height, color=(0, 0, 0)):
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[...] = color
        return cls(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"


def _header_fields(data: bytes, count: int):
    """Split ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the single whitespace byte that
    terminates the last one.
    """
    pos = 0
    tokens = []
    n = len(data)
    for _ in range(count):
        while pos < n:
            c = data[pos:pos + 1]
            if c == b"#":
                while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeader("unexpected end of header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos:pos + 1].isspace():
        raise MalformedHeader("header must end with a single whitespace byte")
    return tokens, pos


def load_ppm(data: bytes) -> ImageBuffer:
    data = bytes(data)
    if data[:2] != b"P6":
        raise MalformedHeader(f"not a binary PPM (magic {data[:2]!r})")
    if len(data) < 3 or not (data[2:3].isspace() or data[2:3] == b"#"):
        raise MalformedHeader("missing whitespace after magic number")
    tokens, end = _header_fields(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeader(f"non-numeric header fields {tokens!r}") from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedMaxval(f"maxval {maxval} (only 255 is supported)")
    start = 2 + end + 1
    need = width * height * 3
    body = data[start:start + need]
    if len(body) < need:
        raise TruncatedPixelData(f"expected {need} pixel bytes, found {len(body)}")
    return ImageBuffer(np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3))


def save_ppm(img: ImageBuffer) -> bytes:
    return b"P6\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


def read_ppm(path) -> ImageBuffer:
    with open(path, "rb") as fh:
        return load_ppm(fh.read())


def write_ppm(path, img: ImageBuffer) -> None:
    with open(path, "wb") as fh:
        fh.write(save_ppm(img))


def sample_direction(img: ImageBuffer, direction):
    """Background colour seen along ``direction`` as three floats in [0, 1]."""
    d = np.asarray(direction, dtype=np.float64)
    return tuple(K.sample_direction(img.pixels, d[0], d[1], d[2]))


def latitude_bands(width, height, bands=8):
    """Synthetic sky whose colour depends only on latitude."""
    rows = np.arange(height)
    t = (rows + 0.5) / height
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:, :, 0] = (255 * (0.5 + 0.5 * np.cos(2 * np.pi * bands * t)))[:, None]
    img[:, :, 1] = (255 * t)[:, None]
    img[:, :, 2] = (255 * (1 - t))[:, None]
    return ImageBuffer(img)


def checkerboard(width, height, cells_x=16, cells_y=8):
    """Synthetic sky with a longitude/latitude checker pattern and colour ramps."""
    y, x = np.mgrid[0:height, 0:width]
    check = ((x * cells_x // width) + (y * cells_y // height)) % 2
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:, :, 0] = np.where(check, 230, 30)
    img[:, :, 1] = (255 * x // max(1, width - 1)).astype(np.uint8)
    img[:, :, 2] = (255 * y // max(1, height - 1)).astype(np.uint8)
    return ImageBuffer(img)
