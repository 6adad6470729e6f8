"""Flat ``key=value`` scene files.

One setting per line, ``#`` starts a comment.  Keys are the long CLI flag
names without the leading dashes (``mass``, ``look-at``, ``epsilon`` ...);
vectors are comma-separated.  The same text travels inside render jobs, so
:func:`scene_to_text` writes floats with ``repr`` and angles in radians to
keep a round trip bit-exact.
"""

from __future__ import annotations

import math
from typing import Dict

from .camera import Camera, SampleSpec
from .geodesic import BlackHole, TraceConfig, default_escape_radius
from .render import SceneConfig


# Scene defaults, in the units the CLI accepts (fov in degrees).
DEFAULTS = {
    "mass": "1.0",
    "center": "0,0,0",
    "camera": "0,0,30",
    "look-at": "0,0,0",
    "up": "0,1,0",
    "fov": "60",
    "width": "256",
    "height": "256",
    "spp": "1",
    "seed": "0",
    "epsilon": "0.1",
    "escape-radius": "auto",
    "max-windings": "10",
    "rel-tol": "1e-10",
    "abs-tol": "1e-12",
}


class ConfigError(ValueError):
    """A setting is missing, unknown or out of range; ``key`` names it."""

    def __init__(self, key, msg):
        super().__init__(f"--{key}: {msg}")
        self.key = key


def parse_kv(text: str) -> Dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip().replace("_", "-")] = value.strip()
    return out


def parse_float(key, value) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None
    if not math.isfinite(x):
        raise ConfigError(key, f"expected a finite number, got {value!r}")
    return x


def parse_int(key, value) -> int:
    try:
        return int(str(value).strip(), 0)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {value!r}") from None


def parse_vec(key, value):
    if isinstance(value, (tuple, list)):
        parts = list(value)
    else:
        parts = str(value).split(",")
    if len(parts) != 3:
        raise ConfigError(key, f"expected x,y,z, got {value!r}")
    return tuple(parse_float(key, p) for p in parts)


def _fmt_vec(v):
    return ",".join(repr(float(c)) for c in v)


def build_scene_parts(values: Dict[str, object]):
    """Validate a settings mapping into (hole, camera, samples, trace_cfg).

    Missing keys fall back to the documented defaults.  ``escape-radius``
    may be ``auto``.
    """
    def get(key):
        return values.get(key, DEFAULTS.get(key))

    mass = parse_float("mass", get("mass"))
    if mass < 0:
        raise ConfigError("mass", f"must be >= 0, got {mass}")
    center = parse_vec("center", get("center"))
    position = parse_vec("camera", get("camera"))
    look_at = parse_vec("look-at", get("look-at"))
    up = parse_vec("up", get("up"))
    if values.get("fov-radians") is not None:
        fov = parse_float("fov-radians", values["fov-radians"])
        fov_key = "fov-radians"
    else:
        fov = math.radians(parse_float("fov", get("fov")))
        fov_key = "fov"
    if not 0.0 < fov < math.pi:
        raise ConfigError(fov_key, "field of view must lie strictly between 0 and 180 degrees")
    width = parse_int("width", get("width"))
    height = parse_int("height", get("height"))
    for key, val in (("width", width), ("height", height)):
        if val < 1:
            raise ConfigError(key, f"must be >= 1, got {val}")
    spp = parse_int("spp", get("spp"))
    if spp < 1:
        raise ConfigError("spp", f"must be >= 1, got {spp}")
    seed = parse_int("seed", get("seed"))
    if not -(1 << 63) <= seed < (1 << 64):
        raise ConfigError("seed", "must fit in 64 bits")

    nums = {}
    for key in ("epsilon", "rel-tol", "abs-tol"):
        nums[key] = parse_float(key, get(key))
        if nums[key] <= 0:
            raise ConfigError(key, f"must be > 0, got {nums[key]}")
    max_windings = parse_float("max-windings", get("max-windings"))
    if max_windings < 1:
        raise ConfigError("max-windings", f"must be >= 1, got {max_windings}")
    esc = get("escape-radius")
    distance = math.dist(position, center)
    if esc is None or str(esc).strip().lower() == "auto":
        escape_radius = default_escape_radius(mass, distance)
    else:
        escape_radius = parse_float("escape-radius", esc)
        if escape_radius <= 0:
            raise ConfigError("escape-radius", f"must be > 0, got {escape_radius}")
    if not distance > 2 * mass:
        raise ConfigError("camera", f"camera is inside the horizon (distance {distance} <= {2 * mass})")

    try:
        camera = Camera(position, look_at, fov, width, height, up)
    except ValueError as exc:
        raise ConfigError("look-at", str(exc)) from None
    return (BlackHole(mass, center), camera, SampleSpec(spp, seed),
            TraceConfig(nums["epsilon"], escape_radius, max_windings,
                        nums["rel-tol"], nums["abs-tol"]))


def scene_from_text(text: str, background) -> SceneConfig:
    hole, camera, samples, trace_cfg = build_scene_parts(parse_kv(text))
    return SceneConfig(hole, camera, samples, trace_cfg, background)


def scene_to_text(scene) -> str:
    """Serialize everything but the background image."""
    cam, t = scene.camera, scene.trace_cfg
    lines = [
        f"mass={scene.hole.mass!r}",
        f"center={_fmt_vec(scene.hole.center)}",
        f"camera={_fmt_vec(cam.position)}",
        f"look-at={_fmt_vec(cam.look_at)}",
        f"up={_fmt_vec(cam.up)}",
        f"fov-radians={cam.vertical_fov!r}",
        f"width={cam.width}",
        f"height={cam.height}",
        f"spp={scene.samples.spp}",
        f"seed={scene.samples.seed}",
        f"epsilon={t.epsilon!r}",
        f"escape-radius={t.escape_radius!r}",
        f"max-windings={t.max_windings!r}",
        f"rel-tol={t.rel_tol!r}",
        f"abs-tol={t.abs_tol!r}",
    ]
    return "\n".join(lines) + "\n"
