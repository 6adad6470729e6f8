import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bhrt.environment import (ImageBuffer, MalformedHeader, TruncatedPixelData,
                              UnsupportedMaxval, load_ppm, sample_direction, save_ppm)

RED_BLUE = b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 0, 255])


def test_load_minimal():
    img = load_ppm(RED_BLUE)
    assert (img.width, img.height) == (2, 1)
    assert tuple(img.pixels[0, 0]) == (255, 0, 0)
    assert tuple(img.pixels[0, 1]) == (0, 0, 255)


def test_comments_are_skipped():
    commented = b"P6\n# comment\n2 1\n255\n" + RED_BLUE[-6:]
    assert load_ppm(commented) == load_ppm(RED_BLUE)
    assert load_ppm(b"P6 2 # w\n 1 255\n" + RED_BLUE[-6:]) == load_ppm(RED_BLUE)


@pytest.mark.parametrize("data, error", [
    (b"P3\n2 1\n255\n255 0 0 0 0 255\n", MalformedHeader),
    (b"P6\n2\n", MalformedHeader),
    (b"P6\nx 1\n255\n" + bytes(6), MalformedHeader),
    (b"P6\n2 1\n65535\n" + bytes(12), UnsupportedMaxval),
    (b"P6\n2 1\n255\n" + bytes(5), TruncatedPixelData),
])
def test_load_errors(data, error):
    with pytest.raises(error):
        load_ppm(data)


def test_save_exact_bytes():
    assert save_ppm(ImageBuffer.blank(1, 1)) == b"P6\n1 1\n255\n\0\0\0"
    data = save_ppm(ImageBuffer.blank(2, 2, (1, 2, 3)))
    assert data[:11] == b"P6\n2 2\n255\n"
    assert len(data) == 11 + 12


@settings(max_examples=200)
@given(arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.just(3))))
def test_round_trip(pixels):
    img = ImageBuffer(pixels)
    back = load_ppm(save_ppm(img))
    assert back == img
    assert save_ppm(back) == save_ppm(img)


def test_uniform_image_returns_its_colour():
    img = ImageBuffer.blank(16, 8, (10, 200, 255))
    for d in [(1, 0, 0), (0, 1, 0), (0, -1, 0), (0.6, 0, 0.8), (-1, 0, 0)]:
        assert sample_direction(img, d) == pytest.approx((10 / 255, 200 / 255, 1.0), abs=1e-15)


def test_pole_samples_top_row():
    px = np.zeros((4, 8, 3), np.uint8)
    px[0] = 200
    px[1:] = 10
    assert sample_direction(ImageBuffer(px), (0, 1, 0)) == pytest.approx((200 / 255,) * 3)
    assert sample_direction(ImageBuffer(px), (0, -1, 0)) == pytest.approx((10 / 255,) * 3)


def test_longitude_sweep_and_seam():
    # red channel encodes the column index
    w = 64
    px = np.zeros((2, w, 3), np.uint8)
    px[:, :, 0] = np.arange(w) * 4
    img = ImageBuffer(px)
    thetas = np.linspace(-math.pi + 0.2, math.pi - 0.2, 50)
    reds = [sample_direction(img, (math.cos(t), 0, math.sin(t)))[0] for t in thetas]
    assert np.all(np.diff(reds) > 0)
    # across theta = pi the lookup wraps between the last and first columns
    step = 1.0 / 255 * (px[0, -1, 0] - px[0, 0, 0])
    for delta in (1e-4, 1e-3, 0.02):
        a = sample_direction(img, (math.cos(math.pi - delta), 0, math.sin(math.pi - delta)))
        b = sample_direction(img, (math.cos(math.pi + delta), 0, math.sin(math.pi + delta)))
        assert abs(a[0] - b[0]) <= abs(step) + 1e-12


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_channels_in_unit_range(x, y, z):
    n = math.sqrt(x * x + y * y + z * z)
    if n < 1e-6:
        return
    rng = np.random.default_rng(0)
    img = ImageBuffer(rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
    c = sample_direction(img, (x / n, y / n, z / n))
    assert all(0.0 <= v <= 1.0 for v in c)


def test_buffer_is_immutable():
    img = ImageBuffer.blank(2, 2)
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1
