"""Collision kernels and the angular functions derived from them.

The cross section factorises as ``Phi(|v - v*|) * beta(theta)`` with
``Phi(x) = x**gamma``.  Hard spheres use ``beta = 1`` on ``(0, pi/2)``;
Maxwell molecules and hard potentials use the pure power law
``beta(theta) = theta**(-1 - nu)``, which keeps every derived function in
closed form:

* ``angular_mass(theta)``  H(theta) = int_theta^{pi/2} beta
* ``deviation_angle(z)``   G = H^{-1}, maps an intensity coordinate to an angle
* ``cutoff_weight(x, K)``  Phi_K(x) = pi int_0^K (1 - cos G(z / x**gamma)) dz
* ``tail_weight(x, K)``    Psi_K(x) = pi int_K^inf (1 - cos G(z / x**gamma)) dz

All functions broadcast over numpy arrays.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DomainError, QuadratureError

HALF_PI = 0.5 * math.pi

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-8


class Family(enum.Enum):
    MAXWELL = "maxwell"
    HARD_POTENTIAL = "hard_potential"
    HARD_SPHERE = "hard_sphere"


@dataclass(frozen=True)
class KernelSpec:
    """Which collision kernel is simulated.

    ``nu`` is ignored for hard spheres.  Use the constructors
    :meth:`maxwell`, :meth:`hard_potential` and :meth:`hard_sphere`.
    """

    family: Family
    gamma: float
    nu: float = 0.5

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        g = float(self.gamma)
        if fam is Family.MAXWELL and g != 0.0:
            raise ValueError("Maxwell molecules require gamma = 0")
        if fam is Family.HARD_SPHERE and g != 1.0:
            raise ValueError("hard spheres require gamma = 1")
        if fam is Family.HARD_POTENTIAL and not 0.0 < g < 1.0:
            raise ValueError("hard potentials require 0 < gamma < 1")
        if fam is not Family.HARD_SPHERE and not 0.0 < self.nu < 1.0:
            raise ValueError("nu must lie in (0, 1)")

    @classmethod
    def maxwell(cls, nu=0.5):
        return cls(Family.MAXWELL, 0.0, nu)

    @classmethod
    def hard_potential(cls, gamma=0.5, nu=0.5):
        return cls(Family.HARD_POTENTIAL, gamma, nu)

    @classmethod
    def hard_sphere(cls):
        return cls(Family.HARD_SPHERE, 1.0, 0.5)

    @property
    def power_law(self):
        return self.family is not Family.HARD_SPHERE

    @property
    def cutoff_exponent(self):
        """Exponent ``1 - 2/nu`` of the cutoff error for power-law kernels."""
        if not self.power_law:
            raise ValueError("hard spheres have no power-law cutoff exponent")
        return 1.0 - 2.0 / self.nu

    def label(self):
        if self.family is Family.HARD_SPHERE:
            return "hard_sphere"
        if self.family is Family.MAXWELL:
            return f"maxwell(nu={self.nu:g})"
        return f"hard_potential(gamma={self.gamma:g},nu={self.nu:g})"


def beta(theta, spec):
    theta = np.asarray(theta, dtype=float)
    if np.any((theta <= 0.0) | (theta >= HALF_PI)):
        raise DomainError("beta is defined on the open interval (0, pi/2)")
    if not spec.power_law:
        return np.ones_like(theta)[()]
    return (theta ** (-1.0 - spec.nu))[()]


def angular_mass(theta, spec):
    """H(theta) = int_theta^{pi/2} beta(x) dx, in closed form."""
    theta = np.asarray(theta, dtype=float)
    if np.any((theta <= 0.0) | (theta > HALF_PI)):
        raise DomainError("H is defined on (0, pi/2]")
    if not spec.power_law:
        return (HALF_PI - theta)[()]
    nu = spec.nu
    return ((theta ** -nu - HALF_PI ** -nu) / nu)[()]


def deviation_angle(z, spec):
    """G(z), the inverse of H, extended by G(0) = pi/2 and G(inf) = 0."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0):
        raise DomainError("G is defined for z >= 0")
    if not spec.power_law:
        return np.maximum(HALF_PI - z, 0.0)[()]
    nu = spec.nu
    with np.errstate(divide="ignore", over="ignore"):
        out = (nu * z + HALF_PI ** -nu) ** (-1.0 / nu)
    return out[()]


def scaled_angle(z, x, spec):
    """G(z / x**gamma) with the conventions G(z / 0) = 0 for gamma > 0."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    if spec.gamma == 0.0:
        return deviation_angle(np.broadcast_to(z, np.broadcast(z, x).shape), spec)
    s = x ** spec.gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s > 0.0, z / np.where(s > 0.0, s, 1.0), np.inf)
    return deviation_angle(w, spec)


def _power_moment(a, b, nu, terms=18):
    """int_a^b (1 - cos t) t**(-1-nu) dt for 0 <= a <= b <= pi/2.

    Term-by-term integration of the cosine series; the terms fall off like
    (pi/2)**(2k) / (2k)!, so 18 of them reach double precision.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = np.zeros(np.broadcast(a, b).shape)
    fact = 1.0
    for k in range(1, terms + 1):
        fact *= (2 * k - 1) * (2 * k)
        p = 2 * k - nu
        total += (-1) ** (k + 1) * (b ** p - a ** p) / (p * fact)
    return total


def _angle_integral(theta0, upper, spec):
    """int_theta0^upper (1 - cos t) beta(t) dt (or the reverse if upper < theta0)."""
    if spec.power_law:
        return _power_moment(theta0, upper, spec.nu)
    # beta = 1: antiderivative t - sin t
    return (upper - np.sin(upper)) - (theta0 - np.sin(theta0))


def _scale(x, spec):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise DomainError("relative speed must be nonnegative")
    return np.ones_like(x) if spec.gamma == 0.0 else x ** spec.gamma


def _check_cutoff(K):
    if np.any(np.asarray(K) < 1.0):
        raise DomainError("cutoff K must satisfy K >= 1")


def cutoff_weight(x, K, spec, method="exact"):
    """Phi_K(x) = pi * int_0^K (1 - cos G(z / x**gamma)) dz.

    ``method="exact"`` substitutes theta = G(z / x**gamma), which turns the
    integral into ``pi x**gamma int_{G(K/x**gamma)}^{pi/2} (1-cos t) beta(t) dt``
    and evaluates that in closed form.  ``method="quad"`` integrates the
    defining z-integral adaptively instead.
    """
    _check_cutoff(K)
    if method == "quad":
        return _quad_weight(x, K, spec, upper=False)
    s = _scale(x, spec)
    K = np.asarray(K, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s > 0.0, K / np.where(s > 0.0, s, 1.0), np.inf)
    theta0 = deviation_angle(w, spec)
    return (math.pi * s * _angle_integral(theta0, HALF_PI, spec))[()]


def tail_weight(x, K, spec, method="exact"):
    """Psi_K(x) = pi * int_K^inf (1 - cos G(z / x**gamma)) dz."""
    _check_cutoff(K)
    if method == "quad":
        return _quad_weight(x, K, spec, upper=True)
    s = _scale(x, spec)
    K = np.asarray(K, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(s > 0.0, K / np.where(s > 0.0, s, 1.0), np.inf)
    theta0 = deviation_angle(w, spec)
    return (math.pi * s * _angle_integral(0.0, theta0, spec))[()]


def maxwell_weight(K, spec):
    """zeta_K, the value of Phi_K for gamma = 0 (independent of x)."""
    if spec.gamma != 0.0:
        raise ValueError("zeta_K is defined for Maxwell molecules only")
    return cutoff_weight(1.0, K, spec)


def _integrand(spec, s):
    def f(z):
        # 2 sin^2(t/2) avoids the cancellation in 1 - cos t for small angles
        t = float(deviation_angle(z / s, spec))
        return 2.0 * math.sin(0.5 * t) ** 2

    return f


def _piecewise_quad(f, edges):
    # positive integrand: a purely relative target keeps small tails accurate
    val = err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            v, e = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL * 1e-2, limit=200)
            val += v
            err += e
    return val, err


def _geometric_edges(lo, hi, start, ratio=4.0):
    edges = [lo]
    p = start
    while p < hi:
        if p > lo:
            edges.append(p)
        p *= ratio
    edges.append(hi)
    return edges


def _quad_scalar(x, K, spec, upper):
    s = 1.0 if spec.gamma == 0.0 else x ** spec.gamma
    if s == 0.0:
        return 0.0
    f = _integrand(spec, s)
    if not spec.power_law:
        edge = HALF_PI * s
        if upper:
            val, err = _piecewise_quad(f, [K, max(K, edge)])
        else:
            val, err = _piecewise_quad(f, [0.0, min(K, edge)])
    elif upper:
        # quadrature up to z_star; beyond it 1 - cos G = G^2/2 + O(G^4) integrates
        # in closed form against G(w) = (nu w + a)^(-1/nu)
        nu = spec.nu
        z_star = max(K, s) * 1e6
        val, err = _piecewise_quad(f, _geometric_edges(K, z_star, K))
        arg = nu * z_star / s + HALF_PI ** -nu
        val += s * arg ** (1.0 - 2.0 / nu) / (2.0 * (2.0 - nu))
        err += s * (z_star / s) * arg ** (-4.0 / nu) / 12.0
    else:
        val, err = _piecewise_quad(f, _geometric_edges(0.0, K, s / 16.0))
    if err > max(QUAD_EPSABS * 1e-4, QUAD_EPSREL * abs(val)):
        raise QuadratureError("weight integral did not converge", math.pi * val, math.pi * err)
    return math.pi * val


def _quad_weight(x, K, spec, upper):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise DomainError("relative speed must be nonnegative")
    xb, Kb = np.broadcast_arrays(x, np.asarray(K, dtype=float))
    out = np.empty(xb.shape)
    for idx in np.ndindex(xb.shape):
        out[idx] = _quad_scalar(float(xb[idx]), float(Kb[idx]), spec, upper)
    return out[()]


def g_bound_constants(spec, z):
    """Empirical (c2, c3) with c2 (1+z)^(-1/nu) <= G(z) <= c3 (1+z)^(-1/nu) on ``z``."""
    if not spec.power_law:
        raise ValueError("the power-law envelope of G applies to power-law kernels")
    z = np.asarray(z, dtype=float)
    ratio = deviation_angle(z, spec) * (1.0 + z) ** (1.0 / spec.nu)
    return float(ratio.min()), float(ratio.max())
