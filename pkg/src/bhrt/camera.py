"""Pinhole camera with stateless antialiasing jitter."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels as K

WORLD_UP = (0.0, 1.0, 0.0)


@dataclass(frozen=True)
class SampleSpec:
    spp: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.spp) != self.spp or self.spp < 1:
            raise ValueError(f"spp must be an integer >= 1, got {self.spp!r}")

    @property
    def seed_u64(self) -> np.uint64:
        return np.uint64(int(self.seed) & 0xFFFFFFFFFFFFFFFF)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera.  ``vertical_fov`` is in radians; row 0 is the top row.

    ``up`` is the world-up hint used to build the image basis; it only needs
    changing when the camera looks along the default (0, 1, 0).
    """

    position: tuple = (0.0, 0.0, 30.0)
    look_at: tuple = (0.0, 0.0, 0.0)
    vertical_fov: float = math.radians(60.0)
    width: int = 256
    height: int = 256
    up: tuple = WORLD_UP

    def __post_init__(self):
        for name in ("position", "look_at", "up"):
            vec = tuple(float(c) for c in getattr(self, name))
            if len(vec) != 3:
                raise ValueError(f"{name} must have 3 components")
            object.__setattr__(self, name, vec)
        if not 0.0 < self.vertical_fov < math.pi:
            raise ValueError(f"vertical_fov must lie in (0, pi), got {self.vertical_fov!r}")
        for name in ("width", "height"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ValueError(f"{name} must be an integer >= 1")
        fwd = np.subtract(self.look_at, self.position)
        n = np.linalg.norm(fwd)
        if n == 0.0:
            raise ValueError("look_at must differ from position")
        up = np.asarray(self.up) / np.linalg.norm(self.up)
        if np.linalg.norm(np.cross(fwd / n, up)) < 1e-9:
            raise ValueError("view direction is parallel to the up vector")

    @property
    def aspect(self) -> float:
        return self.width / self.height

    @cached_property
    def basis(self):
        """(forward, right, up) as a right-handed orthonormal triple."""
        fwd = np.subtract(self.look_at, self.position).astype(np.float64)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    @cached_property
    def packed(self) -> np.ndarray:
        fwd, right, up = self.basis
        tan_y = math.tan(0.5 * self.vertical_fov)
        return np.concatenate([fwd, right, up, [self.aspect * tan_y, tan_y]])


def generate_ray(cam: Camera, px: int, py: int, sample: int, spec: SampleSpec):
    """Origin and unit direction of one sample ray through pixel (px, py)."""
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise IndexError(f"pixel ({px}, {py}) outside {cam.width}x{cam.height}")
    if not 0 <= sample < spec.spp:
        raise IndexError(f"sample {sample} outside [0, {spec.spp})")
    d = K.camera_ray(cam.packed, cam.width, cam.height, px, py, sample, spec.spp,
                     spec.seed_u64)
    return np.array(cam.position), d


def ndc_direction(cam: Camera, u: float, v: float) -> np.ndarray:
    """Direction through normalized image coordinates; (0, 0) is the top-left
    corner and (1, 1) the bottom-right."""
    return K.ndc_ray(cam.packed, float(u), float(v))
