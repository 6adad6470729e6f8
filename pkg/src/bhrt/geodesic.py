"""Light rays around a Schwarzschild black hole.

A camera ray is reduced to the plane spanned by the hole centre, the ray
origin and the ray direction.  In that plane the inverse radius u = 1/r obeys

    u'' = 3 M u**2 - u

as a function of the azimuthal angle phi.  The ray is integrated window by
window, each window advancing phi so that consecutive polyline points sit
about ``epsilon`` apart, and the resulting polyline is mapped back to world
space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from . import _kernels as K


class TraceError(ArithmeticError):
    """A ray could not be integrated to a classification."""


class StepSizeUnderflow(TraceError):
    """The adaptive step collapsed below the minimum step size."""


@dataclass(frozen=True)
class BlackHole:
    mass: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.mass >= 0.0 or not math.isfinite(self.mass):
            raise ValueError(f"mass must be finite and >= 0, got {self.mass!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("center must have 3 components")

    @property
    def schwarzschild_radius(self) -> float:
        return 2.0 * self.mass


@dataclass(frozen=True)
class TraceConfig:
    """Numerical knobs for one trace.

    ``epsilon`` is the target spacing between polyline points, in units of
    length; the tolerances drive the adaptive integrator.
    """

    epsilon: float = 0.1
    escape_radius: float = 1.0e4
    max_windings: float = 10.0
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12

    def __post_init__(self):
        for name in ("epsilon", "escape_radius", "rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not self.max_windings >= 1.0:
            raise ValueError(f"max_windings must be >= 1, got {self.max_windings!r}")


def default_escape_radius(mass: float, distance: float) -> float:
    return max(1.0e4 * mass, 2.0 * distance)


class GeodesicState(NamedTuple):
    phi: float
    u: float
    du_dphi: float


class OrbitalPlaneBasis(NamedTuple):
    e1: np.ndarray
    e2: np.ndarray
    origin: np.ndarray

    def to_world(self, r, phi):
        return self.origin + r * (math.cos(phi) * self.e1 + math.sin(phi) * self.e2)


@dataclass(frozen=True)
class Captured:
    pass


@dataclass(frozen=True)
class Escaped:
    direction: tuple


@dataclass(frozen=True)
class Stalled:
    pass


TraceOutcome = Union[Captured, Escaped, Stalled]


@dataclass(frozen=True)
class RayPolyline:
    points: np.ndarray  # (n, 3) world positions
    outcome: TraceOutcome
    # plane-space samples behind ``points``; empty for radial rays
    phi: np.ndarray
    u: np.ndarray
    final_state: Optional[GeodesicState] = None


def ode_rhs(state: GeodesicState, mass: float):
    return K.rhs(state.u, state.du_dphi, mass)


def conserved_energy(state: GeodesicState, mass: float) -> float:
    u, p = state.u, state.du_dphi
    return p * p + u * u - 2.0 * mass * u ** 3


def step_dphi(state: GeodesicState, cfg: TraceConfig) -> float:
    return K.step_dphi(state.u, cfg.epsilon)


def _vec(v):
    return np.asarray(v, dtype=np.float64).reshape(3)


def plane_basis(ray_origin, ray_dir, hole: BlackHole) -> Optional[OrbitalPlaneBasis]:
    """Orthonormal basis of the ray's orbital plane, or None for radial rays."""
    center = _vec(hole.center)
    d = _vec(ray_dir)
    v = _vec(ray_origin) - center
    r0 = np.linalg.norm(v)
    if r0 == 0.0:
        raise ValueError("ray origin coincides with the hole centre")
    e1 = v / r0
    w = d - np.dot(d, e1) * e1
    wn = np.linalg.norm(w)
    if wn < 1e-12:
        return None
    # second Gram-Schmidt pass: nearly radial rays lose orthogonality in the first
    w = w - np.dot(w, e1) * e1
    wn = np.linalg.norm(w)
    return OrbitalPlaneBasis(e1, w / wn, center)


def initial_conditions(ray_origin, ray_dir, hole: BlackHole) -> GeodesicState:
    v = _vec(ray_origin) - _vec(hole.center)
    d = _vec(ray_dir)
    r0 = float(np.linalg.norm(v))
    b = float(np.linalg.norm(np.cross(v, d)))
    if b < 1e-12:
        raise ValueError("radial ray has no orbital plane; classify it analytically")
    return GeodesicState(0.0, 1.0 / r0, -float(np.dot(v, d)) / (r0 * b))


def integrate_window(state: GeodesicState, dphi: float, mass: float,
                     cfg: TraceConfig) -> GeodesicState:
    """Advance ``state`` by exactly ``dphi`` radians of azimuth."""
    if not dphi > 0.0:
        raise ValueError(f"dphi must be > 0, got {dphi!r}")
    status, u, p, advanced, _ = K.integrate_window(
        state.u, state.du_dphi, dphi, mass, cfg.rel_tol, cfg.abs_tol, -1.0, -1.0)
    if status == K.UNDERFLOW:
        raise StepSizeUnderflow(
            f"step size fell below {K.MIN_STEP} at phi={state.phi + advanced!r}, u={u!r}")
    return GeodesicState(state.phi + dphi, u, p)


def trace(ray_origin, ray_dir, hole: BlackHole, cfg: TraceConfig) -> RayPolyline:
    """Integrate a ray and return its world-space polyline and outcome."""
    origin = _vec(ray_origin)
    d = _vec(ray_dir)
    basis = plane_basis(origin, d, hole)
    if basis is None:
        center = _vec(hole.center)
        inward = float(np.dot(d, center - origin)) > 0.0
        if hole.mass > 0.0 and inward:
            end = center + 2.0 * hole.mass * (origin - center) / np.linalg.norm(origin - center)
            outcome = Captured()
        else:
            end = center + cfg.escape_radius * d
            outcome = Escaped(tuple(d))
        return RayPolyline(np.vstack([origin, end]), outcome, np.empty(0), np.empty(0))

    s0 = initial_conditions(origin, d, hole)
    status, phi, u, p, phis, us = K.trace_plane(
        s0.u, s0.du_dphi, hole.mass, cfg.epsilon, cfg.escape_radius,
        cfg.max_windings, cfg.rel_tol, cfg.abs_tol, True)
    final = GeodesicState(phi, u, p)
    if status == K.FAILED:
        raise StepSizeUnderflow(f"integration failed at phi={phi!r}, u={u!r}")
    rs = 1.0 / us
    pts = (basis.origin[None, :]
           + rs[:, None] * (np.cos(phis)[:, None] * basis.e1[None, :]
                            + np.sin(phis)[:, None] * basis.e2[None, :]))
    if status == K.CAPTURED:
        outcome = Captured()
    elif status == K.STALLED:
        outcome = Stalled()
    else:
        tx, ty = K.plane_tangent(phi, u, p)
        outcome = Escaped(tuple(tx * basis.e1 + ty * basis.e2))
    return RayPolyline(pts, outcome, phis, us, final)


def impact_ray(b: float, r0: float, hole: BlackHole):
    """Origin and direction of a ray entering the +x direction with impact
    parameter ``b`` from distance ``r0`` (in the hole's xy plane)."""
    if not 0.0 <= b < r0:
        raise ValueError("need 0 <= b < r0")
    c = _vec(hole.center)
    origin = c + np.array([-math.sqrt(r0 * r0 - b * b), b, 0.0])
    return origin, np.array([1.0, 0.0, 0.0])


def deflection_angle(b: float, hole: BlackHole, cfg: TraceConfig,
                     r0: Optional[float] = None) -> float:
    """Total in-plane bending (radians) of a ray with impact parameter ``b``.

    The ray starts at distance ``r0`` (defaults to the escape radius) and
    must escape.  Rays that loop around the hole give angles above pi.
    """
    if r0 is None:
        r0 = cfg.escape_radius
    origin, d = impact_ray(b, r0, hole)
    line = trace(origin, d, hole, cfg)
    if not isinstance(line.outcome, Escaped):
        raise TraceError(f"ray with b={b!r} did not escape: {type(line.outcome).__name__}")
    s0 = initial_conditions(origin, d, hole)
    s1 = line.final_state
    # heading measured from the radial direction, unwrapped through phi
    start = math.atan2(s0.u, -s0.du_dphi)
    end = s1.phi + math.atan2(s1.u, -s1.du_dphi)
    return end - start
