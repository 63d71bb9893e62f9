"""Compiled inner loops of the particle simulator.

The scalar helpers mirror :mod:`nanbu.geometry` one vector at a time; the
test-suite cross-checks them against the numpy versions.
"""

import math

import numba

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi
COLLINEAR_TOL = 1e-12

FAMILY_POWER_LAW = 0
FAMILY_HARD_SPHERE = 1


@numba.njit(cache=True, nogil=True)
def scaled_angle(z, x, gamma, nu, family):
    # G(z / x**gamma), with G(z / 0) = 0 when gamma > 0
    if gamma > 0.0:
        if x == 0.0:
            return 0.0
        w = z / x ** gamma
    else:
        w = z
    if family == FAMILY_HARD_SPHERE:
        return max(HALF_PI - w, 0.0)
    return (nu * w + HALF_PI ** -nu) ** (-1.0 / nu)


@numba.njit(cache=True, nogil=True)
def frame(x0, x1, x2):
    n = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    if n == 0.0:
        return 0.0, 0.0, 0.0, 0.0, 0.0, 0.0
    a0, a1, a2 = abs(x0), abs(x1), abs(x2)
    # first index of the smallest |X_k|, as np.argmin picks it
    if a0 <= a1 and a0 <= a2:
        u0, u1, u2 = 0.0, x2, -x1
    elif a1 <= a2:
        u0, u1, u2 = -x2, 0.0, x0
    else:
        u0, u1, u2 = x1, -x0, 0.0
    s = n / math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
    i0, i1, i2 = u0 * s, u1 * s, u2 * s
    h0, h1, h2 = x0 / n, x1 / n, x2 / n
    j0 = h1 * i2 - h2 * i1
    j1 = h2 * i0 - h0 * i2
    j2 = h0 * i1 - h1 * i0
    return i0, i1, i2, j0, j1, j2


@numba.njit(cache=True, nogil=True)
def _offset_angle(n0, n1, n2, x0, x1, x2):
    # azimuth of i = n x X within the frame of X
    i0 = n1 * x2 - n2 * x1
    i1 = n2 * x0 - n0 * x2
    i2 = n0 * x1 - n1 * x0
    f0, f1, f2, g0, g1, g2 = frame(x0, x1, x2)
    return math.atan2(i0 * g0 + i1 * g1 + i2 * g2, i0 * f0 + i1 * f1 + i2 * f2)


@numba.njit(cache=True, nogil=True)
def _wrap(angle):
    out = angle % TWO_PI
    if out >= TWO_PI:
        out = 0.0
    return out


@numba.njit(cache=True, nogil=True)
def tanaka_angles(x0, x1, x2, y0, y1, y2):
    nx = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    ny = math.sqrt(y0 * y0 + y1 * y1 + y2 * y2)
    c0 = x1 * y2 - x2 * y1
    c1 = x2 * y0 - x0 * y2
    c2 = x0 * y1 - x1 * y0
    nc = math.sqrt(c0 * c0 + c1 * c1 + c2 * c2)
    if nc > COLLINEAR_TOL * nx * ny:
        n0, n1, n2 = c0 / nc, c1 / nc, c2 / nc
    elif nx >= ny and nx > 0.0:
        f0, f1, f2, _, _, _ = frame(x0, x1, x2)
        n0, n1, n2 = f0 / nx, f1 / nx, f2 / nx
    elif ny > 0.0:
        f0, f1, f2, _, _, _ = frame(y0, y1, y2)
        n0, n1, n2 = f0 / ny, f1 / ny, f2 / ny
    else:
        return 0.0, 0.0
    phi_x = _offset_angle(n0, n1, n2, x0, x1, x2)
    phi_y = _offset_angle(n0, n1, n2, y0, y1, y2)
    return _wrap(phi_y - phi_x), _wrap(-phi_x)


@numba.njit(cache=True, nogil=True)
def jump(x0, x1, x2, z, phi, gamma, nu, family):
    """c for the relative velocity X = v - v*."""
    x = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    theta = scaled_angle(z, x, gamma, nu, family)
    if theta == 0.0 or x == 0.0:
        return 0.0, 0.0, 0.0
    i0, i1, i2, j0, j1, j2 = frame(x0, x1, x2)
    cp, sp = math.cos(phi), math.sin(phi)
    r = -math.sin(0.5 * theta) ** 2  # -(1 - cos theta) / 2 without cancellation
    h = 0.5 * math.sin(theta)
    return (r * x0 + h * (cp * i0 + sp * j0),
            r * x1 + h * (cp * i1 + sp * j1),
            r * x2 + h * (cp * i2 + sp * j2))


@numba.njit(cache=True, nogil=True)
def apply_events(V, applied, idx_i, idx_j, z, phi, levels, gamma, nu, family, align):
    """Apply a stream of events to coupled copies ``V[level, particle, :]``.

    Level ``l`` uses an event only when ``z <= levels[l]``.  With ``align`` set,
    lower levels rotate the shared azimuth by the offset aligning their
    relative velocity with that of the top level.
    """
    n_levels = V.shape[0]
    top = n_levels - 1
    for e in range(idx_i.shape[0]):
        i = idx_i[e]
        j = idx_j[e]
        ze = z[e]
        t0 = V[top, i, 0] - V[top, j, 0]
        t1 = V[top, i, 1] - V[top, j, 1]
        t2 = V[top, i, 2] - V[top, j, 2]
        for lev in range(n_levels):
            if ze > levels[lev]:
                continue
            x0 = V[lev, i, 0] - V[lev, j, 0]
            x1 = V[lev, i, 1] - V[lev, j, 1]
            x2 = V[lev, i, 2] - V[lev, j, 2]
            ph = phi[e]
            if align and lev != top:
                phi0, _ = tanaka_angles(t0, t1, t2, x0, x1, x2)
                ph = _wrap(ph + phi0)
            c0, c1, c2 = jump(x0, x1, x2, ze, ph, gamma, nu, family)
            V[lev, i, 0] += c0
            V[lev, i, 1] += c1
            V[lev, i, 2] += c2
            applied[lev] += 1
