"""Compiled inner loops shared by the tracer, the camera and the renderer.

Everything here is a pure function over scalars and arrays, compiled with
``nogil=True`` so a plain thread pool gets real parallelism.  The public
Python API in the sibling modules wraps these; it never re-implements them,
so the per-pixel path and the per-call path produce identical bits.
"""

import math

import numpy as np
from numba import njit

# window / trace status codes
OK = 0
STOPPED = 1
UNDERFLOW = 2

ESCAPED = 0
CAPTURED = 1
STALLED = 2
FAILED = 3

MIN_STEP = 1e-14
DPHI_MIN = 1e-6
DPHI_MAX = 0.1

# Dormand-Prince 5(4) tableau
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
# PI controller exponents for a 5th order pair
PI_ALPHA = 0.7 / 5.0
PI_BETA = 0.4 / 5.0

_jit = njit(cache=True, nogil=True)


@_jit
def rhs(u, du, mass):
    return du, 3.0 * mass * u * u - u


@_jit
def step_dphi(u, epsilon):
    d = epsilon * u
    if d < DPHI_MIN:
        return DPHI_MIN
    if d > DPHI_MAX:
        return DPHI_MAX
    return d


@_jit
def dp_step(u, p, h, mass, k1u, k1p):
    """One Dormand-Prince step from (u, p) with the FSAL stage k1 supplied."""
    k2u, k2p = rhs(u + h * A21 * k1u, p + h * A21 * k1p, mass)
    k3u, k3p = rhs(u + h * (A31 * k1u + A32 * k2u),
                   p + h * (A31 * k1p + A32 * k2p), mass)
    k4u, k4p = rhs(u + h * (A41 * k1u + A42 * k2u + A43 * k3u),
                   p + h * (A41 * k1p + A42 * k2p + A43 * k3p), mass)
    k5u, k5p = rhs(u + h * (A51 * k1u + A52 * k2u + A53 * k3u + A54 * k4u),
                   p + h * (A51 * k1p + A52 * k2p + A53 * k3p + A54 * k4p), mass)
    k6u, k6p = rhs(u + h * (A61 * k1u + A62 * k2u + A63 * k3u + A64 * k4u + A65 * k5u),
                   p + h * (A61 * k1p + A62 * k2p + A63 * k3p + A64 * k4p + A65 * k5p),
                   mass)
    un = u + h * (B1 * k1u + B3 * k3u + B4 * k4u + B5 * k5u + B6 * k6u)
    pn = p + h * (B1 * k1p + B3 * k3p + B4 * k4p + B5 * k5p + B6 * k6p)
    k7u, k7p = rhs(un, pn, mass)
    eu = h * (E1 * k1u + E3 * k3u + E4 * k4u + E5 * k5u + E6 * k6u + E7 * k7u)
    ep = h * (E1 * k1p + E3 * k3p + E4 * k4p + E5 * k5p + E6 * k6p + E7 * k7p)
    return un, pn, eu, ep, k7u, k7p


@_jit
def integrate_window(u, p, dphi, mass, rtol, atol, h, u_stop):
    """Advance (u, u') by exactly ``dphi`` with adaptive steps.

    ``h`` is the step size suggestion carried over from the previous window
    (non-positive means "start with dphi").  When ``u_stop > 0`` the loop
    returns early after the first accepted step with ``u >= u_stop``.

    Returns ``(status, u, u', advanced, h_next)``.
    """
    if not h > 0.0:
        h = dphi
    k1u, k1p = rhs(u, p, mass)
    done = 0.0
    err_prev = 1e-4
    while True:
        remaining = dphi - done
        if remaining <= 0.0:
            break
        last = h >= remaining
        hs = remaining if last else h
        un, pn, eu, ep, k7u, k7p = dp_step(u, p, hs, mass, k1u, k1p)
        sc_u = atol + rtol * max(abs(u), abs(un))
        sc_p = atol + rtol * max(abs(p), abs(pn))
        err = max(abs(eu) / sc_u, abs(ep) / sc_p)
        if err <= 1.0:
            done = dphi if last else done + hs
            u, p = un, pn
            k1u, k1p = k7u, k7p
            if err == 0.0:
                fac = FAC_MAX
            else:
                fac = SAFETY * err ** (-PI_ALPHA) * err_prev ** PI_BETA
                fac = min(FAC_MAX, max(FAC_MIN, fac))
            err_prev = max(err, 1e-4)
            h_new = hs * fac
            # a boundary-shortened step says little about the natural size
            h = max(h, h_new) if last else h_new
            if u_stop > 0.0 and u >= u_stop:
                return STOPPED, u, p, done, h
        else:
            if err != err or err == np.inf:
                fac = FAC_MIN
            else:
                fac = max(FAC_MIN, SAFETY * err ** -0.2)
            h = hs * fac
            if h < MIN_STEP:
                return UNDERFLOW, u, p, done, h
    return OK, u, p, done, h


@_jit
def trace_plane(u0, p0, mass, epsilon, escape_radius, max_windings, rtol, atol, record):
    """Integrate one ray in its orbital plane until it is classified.

    Returns ``(status, phi, u, u', phis, us)``; the point arrays are empty
    unless ``record`` is set.
    """
    cap = 1024 if record else 1
    phis = np.empty(cap)
    us = np.empty(cap)
    n = 0
    phi = 0.0
    u = u0
    p = p0
    h = -1.0
    if mass > 0.0:
        u_hor = 1.0 / (2.0 * mass)
    else:
        u_hor = np.inf
    u_stop = u_hor if mass > 0.0 else -1.0
    u_esc = 1.0 / escape_radius
    phi_max = 2.0 * math.pi * max_windings
    if record:
        phis[0] = phi
        us[0] = u
        n = 1
    status = FAILED
    while True:
        if u >= u_hor:
            status = CAPTURED
            break
        if u <= u_esc and p < 0.0:
            status = ESCAPED
            break
        if phi > phi_max:
            status = STALLED
            break
        d = step_dphi(u, epsilon)
        if p < 0.0:
            # outbound: keep the linear prediction of u positive
            d = min(d, 0.5 * u / -p)
        st, u, p, adv, h = integrate_window(u, p, d, mass, rtol, atol, h, u_stop)
        phi += adv
        if record and adv > 0.0:
            if n == cap:
                cap *= 2
                nphis = np.empty(cap)
                nus = np.empty(cap)
                nphis[:n] = phis[:n]
                nus[:n] = us[:n]
                phis = nphis
                us = nus
            phis[n] = phi
            us[n] = u
            n += 1
        if st == UNDERFLOW:
            status = CAPTURED if u >= u_hor else FAILED
            break
    return status, phi, u, p, phis[:n], us[:n]


@_jit
def plane_tangent(phi, u, p):
    """In-plane direction of motion at (phi, u, u'), normalized."""
    c = math.cos(phi)
    s = math.sin(phi)
    x = -p * c - u * s
    y = -p * s + u * c
    n = math.sqrt(x * x + y * y)
    return x / n, y / n


@_jit
def trace_ray(o, d, params):
    """Classify a world-space ray; returns (status, dx, dy, dz).

    ``params`` = [cx, cy, cz, mass, epsilon, escape_radius, max_windings,
    rel_tol, abs_tol].
    """
    mass = params[3]
    vx = o[0] - params[0]
    vy = o[1] - params[1]
    vz = o[2] - params[2]
    r0 = math.sqrt(vx * vx + vy * vy + vz * vz)
    e1x, e1y, e1z = vx / r0, vy / r0, vz / r0
    dot = d[0] * e1x + d[1] * e1y + d[2] * e1z
    wx = d[0] - dot * e1x
    wy = d[1] - dot * e1y
    wz = d[2] - dot * e1z
    wn = math.sqrt(wx * wx + wy * wy + wz * wz)
    if wn < 1e-12:
        if mass > 0.0 and dot < 0.0:
            return CAPTURED, 0.0, 0.0, 0.0
        return ESCAPED, d[0], d[1], d[2]
    dot2 = wx * e1x + wy * e1y + wz * e1z
    wx -= dot2 * e1x
    wy -= dot2 * e1y
    wz -= dot2 * e1z
    wn = math.sqrt(wx * wx + wy * wy + wz * wz)
    e2x, e2y, e2z = wx / wn, wy / wn, wz / wn
    cx = vy * d[2] - vz * d[1]
    cy = vz * d[0] - vx * d[2]
    cz = vx * d[1] - vy * d[0]
    b = math.sqrt(cx * cx + cy * cy + cz * cz)
    u0 = 1.0 / r0
    p0 = -(vx * d[0] + vy * d[1] + vz * d[2]) / (r0 * b)
    status, phi, u, p, _, _ = trace_plane(u0, p0, mass, params[4], params[5], params[6],
                                          params[7], params[8], False)
    if status != ESCAPED:
        return status, 0.0, 0.0, 0.0
    tx, ty = plane_tangent(phi, u, p)
    return ESCAPED, tx * e1x + ty * e2x, tx * e1y + ty * e2y, tx * e1z + ty * e2z


# -- camera -----------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@_jit
def splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@_jit
def sample_offsets(seed, px, py, sample):
    h = splitmix64(seed)
    h = splitmix64(h ^ np.uint64(px))
    h = splitmix64(h ^ np.uint64(py))
    h = splitmix64(h ^ np.uint64(sample))
    sx = float(h >> _S11) * _TO_UNIT
    h = splitmix64(h)
    sy = float(h >> _S11) * _TO_UNIT
    return sx, sy


@_jit
def ndc_ray(cam, u, v):
    """Unit direction through normalized image coords (u right, v down)."""
    a = (2.0 * u - 1.0) * cam[9]
    c = (1.0 - 2.0 * v) * cam[10]
    dx = cam[0] + a * cam[3] + c * cam[6]
    dy = cam[1] + a * cam[4] + c * cam[7]
    dz = cam[2] + a * cam[5] + c * cam[8]
    n = math.sqrt(dx * dx + dy * dy + dz * dz)
    out = np.empty(3)
    out[0] = dx / n
    out[1] = dy / n
    out[2] = dz / n
    return out


@_jit
def camera_ray(cam, width, height, px, py, sample, spp, seed):
    """World direction through a pixel sample.

    ``cam`` = [fx, fy, fz, rx, ry, rz, ux, uy, uz, tan_half_x, tan_half_y].
    """
    if spp > 1:
        sx, sy = sample_offsets(seed, px, py, sample)
    else:
        sx, sy = 0.5, 0.5
    return ndc_ray(cam, (px + sx) / width, (py + sy) / height)


# -- environment ------------------------------------------------------------

@_jit
def sample_direction(img, dx, dy, dz):
    """Bilinear equirectangular lookup; returns channels in [0, 1]."""
    h = img.shape[0]
    w = img.shape[1]
    u_tex = (math.atan2(dz, dx) + math.pi) / (2.0 * math.pi)
    v_tex = (0.5 * math.pi - math.asin(min(1.0, max(-1.0, dy)))) / math.pi
    x = u_tex * w - 0.5
    y = v_tex * h - 0.5
    xf = math.floor(x)
    yf = math.floor(y)
    fx = x - xf
    fy = y - yf
    x0 = int(xf) % w
    x1 = (x0 + 1) % w
    y0 = min(h - 1, max(0, int(yf)))
    y1 = min(h - 1, max(0, int(yf) + 1))
    out = np.empty(3)
    for ch in range(3):
        top = img[y0, x0, ch] * (1.0 - fx) + img[y0, x1, ch] * fx
        bot = img[y1, x0, ch] * (1.0 - fx) + img[y1, x1, ch] * fx
        v = (top * (1.0 - fy) + bot * fy) / 255.0
        out[ch] = min(1.0, max(0.0, v))
    return out


# -- render -----------------------------------------------------------------

@_jit
def quantize(x):
    # half away from zero; x is non-negative here
    v = math.floor(x * 255.0 + 0.5)
    if v > 255.0:
        v = 255.0
    return v


@_jit
def shade(origin, cam, width, height, px, py, spp, seed, params, bg):
    """Mean colour of all samples in a pixel; returns (status, r, g, b)."""
    acc0 = 0.0
    acc1 = 0.0
    acc2 = 0.0
    for s in range(spp):
        d = camera_ray(cam, width, height, px, py, s, spp, seed)
        st, ex, ey, ez = trace_ray(origin, d, params)
        if st == FAILED:
            return FAILED, 0.0, 0.0, 0.0
        if st == ESCAPED:
            c = sample_direction(bg, ex, ey, ez)
            acc0 += c[0]
            acc1 += c[1]
            acc2 += c[2]
    return ESCAPED, quantize(acc0 / spp), quantize(acc1 / spp), quantize(acc2 / spp)


@_jit
def render_row(out, py, origin, cam, width, height, spp, seed, params, bg):
    """Fill ``out[px, ch]`` for one image row; returns the failing column or -1."""
    for px in range(width):
        st, r, g, b = shade(origin, cam, width, height, px, py, spp, seed, params, bg)
        if st == FAILED:
            return px
        out[px, 0] = np.uint8(r)
        out[px, 1] = np.uint8(g)
        out[px, 2] = np.uint8(b)
    return -1


@_jit
def project_row(out, py, cam, width, height, spp, seed, bg):
    """Background seen along the unbent camera rays, for the flat-space check."""
    for px in range(width):
        acc0 = 0.0
        acc1 = 0.0
        acc2 = 0.0
        for s in range(spp):
            d = camera_ray(cam, width, height, px, py, s, spp, seed)
            c = sample_direction(bg, d[0], d[1], d[2])
            acc0 += c[0]
            acc1 += c[1]
            acc2 += c[2]
        out[px, 0] = np.uint8(quantize(acc0 / spp))
        out[px, 1] = np.uint8(quantize(acc1 / spp))
        out[px, 2] = np.uint8(quantize(acc2 / spp))
