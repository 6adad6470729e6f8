"""Ray tracer for images of a Schwarzschild black hole."""

from .camera import Camera, SampleSpec, generate_ray
from .environment import ImageBuffer, load_ppm, sample_direction, save_ppm
from .geodesic import (BlackHole, Captured, Escaped, GeodesicState, RayPolyline, Stalled,
                       TraceConfig, deflection_angle, trace)
from .render import BandAssignment, SceneConfig, make_bands, render_image, shade_pixel

__all__ = [
    "BandAssignment", "BlackHole", "Camera", "Captured", "Escaped", "GeodesicState",
    "ImageBuffer", "RayPolyline", "SampleSpec", "SceneConfig", "Stalled", "TraceConfig",
    "deflection_angle", "generate_ray", "load_ppm", "make_bands", "render_image",
    "sample_direction", "save_ppm", "shade_pixel", "trace",
]

__version__ = "0.1.0"
