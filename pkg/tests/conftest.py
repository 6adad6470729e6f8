import math
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bhrt.camera import Camera, SampleSpec  # noqa: E402
from bhrt.environment import checkerboard  # noqa: E402
from bhrt.geodesic import BlackHole, TraceConfig, default_escape_radius  # noqa: E402
from bhrt.render import SceneConfig  # noqa: E402


def make_scene(mass=1.0, distance=30.0, fov_deg=60.0, width=32, height=32, spp=1, seed=0,
               epsilon=0.1, background=None):
    cam = Camera(position=(0.0, 0.0, distance), vertical_fov=math.radians(fov_deg),
                 width=width, height=height)
    cfg = TraceConfig(epsilon=epsilon, escape_radius=default_escape_radius(mass, distance))
    bg = background if background is not None else checkerboard(256, 128)
    return SceneConfig(BlackHole(mass), cam, SampleSpec(spp, seed), cfg, bg)


@pytest.fixture
def scene():
    return make_scene()
