"""Quadratic Wasserstein distances between point clouds and rate fitting.

Costs are stored squared (``W2^2``); ``TransportResult.distance`` gives the
square root.  Equal-size clouds are matched exactly by a linear assignment
solver; clouds of different sizes go through the network simplex of POT.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, spatial, stats

from .errors import CapacityError, InputError

# POT probes every array backend it can import; only numpy is used here.
for _backend in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

W2_EXACT_MAX_N = 4096
W2_UNEQUAL_MAX_ENTRIES = 1 << 26


@dataclass
class TransportResult:
    """``cost`` is W2^2; ``plan`` is a permutation (equal sizes) or a flow matrix."""

    cost: float
    plan: np.ndarray
    exact: bool = True

    @property
    def distance(self):
        return math.sqrt(max(self.cost, 0.0))


def as_cloud(points):
    """Validate and return an ``(n, d)`` float array of finite points."""
    a = np.asarray(points, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[0] < 1:
        raise InputError("a point cloud needs shape (n, d) with n >= 1")
    if not np.all(np.isfinite(a)):
        raise InputError("point clouds must have finite coordinates")
    return a


def w2_exact(a, b, max_n=W2_EXACT_MAX_N):
    """Optimal matching of two clouds of equal size ``n``.

    Returns ``min over permutations p of (1/n) sum |a_i - b_p(i)|^2`` and the
    optimal permutation.
    """
    a = as_cloud(a)
    b = as_cloud(b)
    if a.shape != b.shape:
        raise InputError(f"w2_exact needs equal sizes, got {a.shape} and {b.shape}")
    n = a.shape[0]
    if n > max_n:
        raise CapacityError(f"n = {n} exceeds the exact solver limit {max_n}; subsample or use w2_unequal")
    cost = spatial.distance.cdist(a, b, "sqeuclidean")
    rows, cols = optimize.linear_sum_assignment(cost)
    perm = np.empty(n, dtype=np.int64)
    perm[rows] = cols
    return TransportResult(float(cost[rows, cols].sum() / n), perm, True)


def w2_unequal(a, b, max_entries=W2_UNEQUAL_MAX_ENTRIES):
    """Optimal transport between uniform measures on ``n`` and ``m`` atoms.

    Solved as a min-cost flow (network simplex); ``plan[i, k]`` is the mass
    moved from ``a_i`` to ``b_k``.
    """
    a = as_cloud(a)
    b = as_cloud(b)
    if a.shape[1] != b.shape[1]:
        raise InputError("clouds live in different dimensions")
    n, m = a.shape[0], b.shape[0]
    if n * m > max_entries:
        keep = max(1, max_entries // min(n, m))
        raise CapacityError(
            f"{n} x {m} transport problem exceeds {max_entries} cost entries; "
            f"subsample the larger cloud to at most {keep} points"
        )
    cost = spatial.distance.cdist(a, b, "sqeuclidean")
    wa = np.full(n, 1.0 / n)
    wb = np.full(m, 1.0 / m)
    plan, log = ot.emd(wa, wb, cost, numItermax=max(100000, 50 * n * m), log=True)
    if log.get("warning"):
        raise ArithmeticError(f"network simplex did not converge: {log['warning']}")
    return TransportResult(float(np.sum(plan * cost)), plan, True)


def slope_fit(x, y, confidence=0.95):
    """Least-squares line through ``(log x, log y)``.

    Returns a dict with ``slope``, ``intercept``, ``ci`` (two-sided interval for
    the slope from the t distribution) and ``stderr``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise InputError("slope_fit needs at least three (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InputError("slope_fit works on positive data only")
    if np.unique(x).size != x.size:
        raise InputError("x values must be distinct")
    res = stats.linregress(np.log(x), np.log(y))
    q = stats.t.ppf(0.5 + confidence / 2.0, x.size - 2)
    half = q * res.stderr
    return {
        "slope": float(res.slope),
        "intercept": float(res.intercept),
        "ci": (float(res.slope - half), float(res.slope + half)),
        "stderr": float(res.stderr),
    }


def mean_and_se(values):
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def epsilon_N_estimate(sampler, N, replicas=30, reference_size=None, seed=0, min_ratio=8):
    """Monte Carlo estimate of ``E W2^2(f, empirical measure of N draws)``.

    The law ``f`` is replaced by a fresh ``reference_size``-point sample in each
    replica, which adds a bias of the order of the same quantity at that larger
    size.  ``sampler(n, rng)`` returns ``n`` draws as an ``(n, d)`` array.
    Returns ``{"mean", "se", "N", "M", "replicas"}``.
    """
    M = min_ratio * N if reference_size is None else int(reference_size)
    if M < min_ratio * N:
        raise InputError(f"reference size {M} is below {min_ratio} N = {min_ratio * N}")
    if replicas < 30:
        raise InputError("at least 30 replicas are required")
    vals = []
    for r in range(replicas):
        ss = np.random.SeedSequence(seed, spawn_key=(r,))
        rng = np.random.Generator(np.random.Philox(ss))
        x = sampler(N, rng)
        ref = sampler(M, rng)
        vals.append(w2_unequal(x, ref).cost)
    mean, se = mean_and_se(vals)
    return {"mean": mean, "se": se, "N": int(N), "M": int(M), "replicas": int(replicas)}


# ---------------------------------------------------------------- negative Sobolev norm


def gaussian_charfun(sigma=1.0):
    """Radial characteristic function ``exp(-sigma^2 r^2 / 2)`` of a centred Gaussian."""
    return lambda r: np.exp(-0.5 * (sigma * r) ** 2)


def _radial_nodes(r_max, panel, order):
    edges = np.linspace(0.0, r_max, max(1, int(math.ceil(r_max / panel))) + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel()
    return r, wr


def _sinc(x):
    return np.sinc(x / math.pi)


def sobolev_distance_sq(points, charfun, s=2.0, r_max=100.0, panel=1.0, order=16, block=4096):
    """``int (1 + |xi|^2)^(-s) |f_hat(xi) - mu_hat(xi)|^2 d xi`` for an isotropic ``f``.

    ``mu`` is the empirical measure of ``points`` (shape ``(N, 3)``) and
    ``charfun(r)`` the radial profile of ``f_hat``.  The angular integral is done
    exactly (sphere averages of plane waves are ``sin(r d) / (r d)``), the
    radial one by Gauss-Legendre panels up to ``r_max``.  Past ``r_max`` the
    oscillating terms are dropped and the non-oscillating remainder
    (coincident atoms, atoms at the origin, ``f_hat(r_max)``) is integrated in
    closed form.
    """
    if s <= 1.5:
        raise InputError("the integral diverges in three dimensions unless s > 3/2")
    v = as_cloud(points)
    if v.shape[1] != 3:
        raise InputError("sobolev_distance_sq expects three-dimensional points")
    n = v.shape[0]
    r, wr = _radial_nodes(r_max, panel, order)
    fh = charfun(r)
    speed = np.linalg.norm(v, axis=1)
    cross = np.zeros_like(r)
    for lo in range(0, n, block):
        cross += _sinc(np.outer(speed[lo:lo + block], r)).sum(axis=0)
    # sum over ordered pairs of sinc(r |v_i - v_k|): diagonal plus twice i < k
    d = spatial.distance.pdist(v) if n > 1 else np.zeros(0)
    pair = np.full_like(r, float(n))
    for lo in range(0, d.size, block):
        pair += 2.0 * _sinc(np.outer(d[lo:lo + block], r)).sum(axis=0)
    A = pair / n ** 2 - 2.0 * fh * cross / n + fh ** 2
    weight = 4.0 * math.pi * r ** 2 * (1.0 + r ** 2) ** (-s)
    total = float(np.sum(wr * weight * A))
    f_inf = float(charfun(np.asarray([r_max]))[0])
    coincident = n + 2.0 * np.count_nonzero(d == 0.0)
    at_origin = np.count_nonzero(speed == 0.0)
    a_inf = coincident / n ** 2 - 2.0 * f_inf * at_origin / n + f_inf ** 2
    return total + a_inf * _radial_tail(r_max, s)


def _radial_tail(r_max, s):
    # 4 pi int_{r_max}^inf r^2 (1 + r^2)^(-s) dr
    if s == 2.0:
        return 4.0 * math.pi * (0.25 * math.pi - 0.5 * (math.atan(r_max) - r_max / (1.0 + r_max ** 2)))
    val, _ = integrate.quad(lambda t: t * t * (1.0 + t * t) ** (-s), r_max, np.inf)
    return 4.0 * math.pi * val


def sobolev_expectation(N, charfun_sq, s=2.0):
    """``(1/N) int (1 + |xi|^2)^(-s) (1 - |f_hat|^2) d xi`` for an isotropic law.

    ``charfun_sq(r)`` is ``|f_hat|^2`` along a ray.
    """
    if s <= 1.5:
        raise InputError("the integral diverges in three dimensions unless s > 3/2")
    f = lambda r: 4.0 * math.pi * r * r * (1.0 + r * r) ** (-s) * (1.0 - charfun_sq(r))
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    return val / N
