"""Scanline-parallel rendering of a black hole in front of a sky map."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple

import numpy as np

from . import _kernels as K
from .camera import Camera, SampleSpec
from .environment import ImageBuffer
from .geodesic import BlackHole, TraceConfig, TraceError


class RenderError(TraceError):
    """A pixel's ray could not be traced; carries the pixel coordinates."""

    def __init__(self, px, py, msg="trace failed"):
        super().__init__(f"{msg} at pixel ({px}, {py})")
        self.px = px
        self.py = py


@dataclass(frozen=True)
class SceneConfig:
    hole: BlackHole
    camera: Camera
    samples: SampleSpec
    trace_cfg: TraceConfig
    background: ImageBuffer

    def __post_init__(self):
        dist = math.dist(self.camera.position, self.hole.center)
        if not dist > 2.0 * self.hole.mass:
            raise ValueError(
                f"camera must sit outside the horizon (distance {dist} <= {2 * self.hole.mass})")

    @property
    def width(self) -> int:
        return self.camera.width

    @property
    def height(self) -> int:
        return self.camera.height

    @cached_property
    def params(self) -> np.ndarray:
        t = self.trace_cfg
        return np.array([*self.hole.center, self.hole.mass, t.epsilon, t.escape_radius,
                         t.max_windings, t.rel_tol, t.abs_tol], dtype=np.float64)

    @cached_property
    def origin(self) -> np.ndarray:
        return np.array(self.camera.position, dtype=np.float64)


class BandAssignment(NamedTuple):
    worker_id: int
    row_start: int
    row_end: int

    @property
    def rows(self) -> int:
        return self.row_end - self.row_start


def make_bands(height: int, workers: int) -> List[BandAssignment]:
    """Split ``height`` rows into at most ``workers`` contiguous bands.

    The first ``height % workers`` bands get one extra row.
    """
    if height < 1 or workers < 1:
        raise ValueError("height and workers must be >= 1")
    n = min(height, workers)
    base, extra = divmod(height, n)
    bands = []
    start = 0
    for i in range(n):
        rows = base + (1 if i < extra else 0)
        bands.append(BandAssignment(i, start, start + rows))
        start += rows
    return bands


def _row_into(scene: SceneConfig, out: np.ndarray, py: int) -> None:
    cam = scene.camera
    bad = K.render_row(out, py, scene.origin, cam.packed, cam.width, cam.height,
                       scene.samples.spp, scene.samples.seed_u64, scene.params,
                       scene.background.pixels)
    if bad >= 0:
        raise RenderError(bad, py)


def shade_pixel(scene: SceneConfig, px: int, py: int):
    """8-bit RGB colour of one pixel (mean over its samples)."""
    cam = scene.camera
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise IndexError(f"pixel ({px}, {py}) outside {cam.width}x{cam.height}")
    status, r, g, b = K.shade(scene.origin, cam.packed, cam.width, cam.height, px, py,
                              scene.samples.spp, scene.samples.seed_u64, scene.params,
                              scene.background.pixels)
    if status == K.FAILED:
        raise RenderError(px, py)
    return int(r), int(g), int(b)


def render_rows(scene: SceneConfig, row_start: int, row_end: int, threads: int = 1) -> np.ndarray:
    """Render rows [row_start, row_end) into a (rows, width, 3) uint8 array.

    Rows are handed out one at a time from a shared queue; every pixel is a
    pure function of the scene, so the result does not depend on ``threads``.
    """
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if not 0 <= row_start <= row_end <= scene.height:
        raise ValueError(f"bad row range [{row_start}, {row_end})")
    out = np.zeros((row_end - row_start, scene.width, 3), dtype=np.uint8)
    rows = range(row_start, row_end)
    if threads == 1 or len(rows) <= 1:
        for py in rows:
            _row_into(scene, out[py - row_start], py)
        return out
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_row_into, scene, out[py - row_start], py) for py in rows]
        # lowest failing row wins, independent of scheduling
        for fut in futures:
            fut.result()
    return out


def render_band(scene: SceneConfig, band: BandAssignment, threads: int = 1) -> np.ndarray:
    return render_rows(scene, band.row_start, band.row_end, threads)


def render_image(scene: SceneConfig, threads: int = 1) -> ImageBuffer:
    return ImageBuffer(render_rows(scene, 0, scene.height, threads))


def project_background(scene: SceneConfig) -> ImageBuffer:
    """Image of the sky along the camera rays with no lensing at all."""
    cam = scene.camera
    out = np.zeros((cam.height, cam.width, 3), dtype=np.uint8)
    for py in range(cam.height):
        K.project_row(out[py], py, cam.packed, cam.width, cam.height, scene.samples.spp,
                      scene.samples.seed_u64, scene.background.pixels)
    return ImageBuffer(out)


def warmup() -> None:
    """Compile (or load from cache) the render kernels."""
    from .geodesic import default_escape_radius

    cam = Camera(position=(0.0, 0.0, 10.0), width=2, height=2)
    hole = BlackHole(1.0)
    scene = SceneConfig(hole, cam, SampleSpec(2), TraceConfig(
        epsilon=1.0, escape_radius=default_escape_radius(1.0, 10.0)),
        ImageBuffer.blank(2, 1))
    render_rows(scene, 0, 1)
