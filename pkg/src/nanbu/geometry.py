"""Deterministic geometry of a single collision.

Velocities are arrays whose last axis has length 3; every function
broadcasts over the leading axes.  For a relative velocity ``X`` the
azimuthal frame ``(I(X), J(X))`` spans the plane orthogonal to ``X`` and
both vectors have length ``|X|``, so that ``(X, I, J) / |X|`` is a direct
orthonormal basis.
"""

import math

import numpy as np

from .errors import DomainError
from .kernel import scaled_angle

TWO_PI = 2.0 * math.pi
COLLINEAR_TOL = 1e-12


def _norm(X):
    return np.sqrt(np.einsum("...k,...k->...", X, X))


def _frame(X):
    # I(X) = |X| (X x e) / |X x e| with e the axis least aligned with X;
    # rows with X = 0 get a zero frame so that Gamma(0, .) = 0.
    X = np.asarray(X, dtype=float)
    n = _norm(X)
    axis = np.argmin(np.abs(X), axis=-1)
    e = np.zeros_like(X)
    np.put_along_axis(e, axis[..., None], 1.0, axis=-1)
    u = np.cross(X, e)
    un = _norm(u)
    safe = n > 0.0
    scale = np.where(safe, n / np.where(safe, un, 1.0), 0.0)
    i_vec = u * scale[..., None]
    xhat = X / np.where(safe, n, 1.0)[..., None]
    j_vec = np.cross(xhat, i_vec)
    return i_vec, j_vec


def frame(X):
    """Return ``(I(X), J(X))``; raises :class:`DomainError` if ``X`` vanishes."""
    X = np.asarray(X, dtype=float)
    if np.any(_norm(X) == 0.0):
        raise DomainError("the azimuthal frame is undefined for X = 0")
    return _frame(X)


def azimuth_vector(X, phi):
    """Gamma(X, phi) = cos(phi) I(X) + sin(phi) J(X); zero when X = 0."""
    i_vec, j_vec = _frame(X)
    phi = np.asarray(phi, dtype=float)[..., None]
    return np.cos(phi) * i_vec + np.sin(phi) * j_vec


def deviation(v, v_star, theta, phi):
    """a(v, v*, theta, phi): the velocity change of ``v`` for deviation angle theta."""
    X = np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)
    theta = np.asarray(theta, dtype=float)[..., None]
    # (1 - cos theta) / 2 = sin^2(theta / 2), exact for small angles
    return -np.sin(0.5 * theta) ** 2 * X + 0.5 * np.sin(theta) * azimuth_vector(X, phi)


def jump(v, v_star, z, phi, spec):
    """c(v, v*, z, phi) = a(v, v*, G(z / |v - v*|**gamma), phi)."""
    X = np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)
    theta = scaled_angle(z, _norm(X), spec)
    return deviation(v, v_star, theta, phi)


def truncated_jump(v, v_star, z, phi, K, spec):
    """c_K = c * 1{z <= K}."""
    c = jump(v, v_star, z, phi, spec)
    keep = np.asarray(z, dtype=float) <= K
    return np.where(keep[..., None], c, 0.0)


def post_collision(v, v_star, theta, phi):
    """Both outgoing velocities ``(v', v'_*)`` of an elastic binary collision."""
    a = deviation(v, v_star, theta, phi)
    return np.asarray(v, dtype=float) + a, np.asarray(v_star, dtype=float) - a


def _wrap(angle):
    out = np.mod(angle, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def tanaka_angles(X, Y):
    """Azimuth offsets ``(phi0, phi1)`` aligning the frames of ``X`` and ``Y``.

    With these offsets, for every phi,
    ``Gamma(X, phi) . Gamma(Y, phi + phi0) = X.Y cos^2(phi + phi1) + |X||Y| sin^2(phi + phi1)``
    and therefore ``|Gamma(X, phi) - Gamma(Y, phi + phi0)| <= |X - Y|``.

    The common vectors are ``i_X = n x X`` and ``i_Y = n x Y`` with ``n`` the
    unit normal of the plane through X and Y.  For collinear inputs any unit
    ``n`` orthogonal to the common line works; it is taken from the frame of
    the longer vector.  Two vanishing inputs return ``(0, 0)``.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X, Y = np.broadcast_arrays(X, Y)
    nx = _norm(X)
    ny = _norm(Y)
    cr = np.cross(X, Y)
    ncr = _norm(cr)
    generic = ncr > COLLINEAR_TOL * nx * ny
    longer = np.where((nx >= ny)[..., None], X, Y)
    nl = np.maximum(nx, ny)
    fallback = _frame(longer)[0] / np.where(nl > 0, nl, 1.0)[..., None]
    n = np.where(generic[..., None], cr / np.where(generic, ncr, 1.0)[..., None], fallback)
    ix_frame, jx_frame = _frame(X)
    iy_frame, jy_frame = _frame(Y)
    i_x = np.cross(n, X)
    i_y = np.cross(n, Y)
    dot = lambda a, b: np.einsum("...k,...k->...", a, b)
    phi_x = np.arctan2(dot(i_x, jx_frame), dot(i_x, ix_frame))
    phi_y = np.arctan2(dot(i_y, jy_frame), dot(i_y, iy_frame))
    phi0 = _wrap(phi_y - phi_x)
    phi1 = _wrap(-phi_x)
    return phi0[()], phi1[()]
