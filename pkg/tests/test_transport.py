import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate

from nanbu.errors import CapacityError, InputError
from nanbu.sim import Maxwellian, PointMass
from nanbu.transport import (
    epsilon_N_estimate,
    gaussian_charfun,
    slope_fit,
    sobolev_distance_sq,
    sobolev_expectation,
    w2_exact,
    w2_unequal,
)


def brute_force_w2(a, b):
    n = len(a)
    perms = np.array(list(itertools.permutations(range(n))))
    cost = np.sum((a[:, None] - b[None]) ** 2, axis=-1)
    return cost[np.arange(n), perms].sum(axis=1).min() / n


def brute_force_transport(a, b):
    # minimum over the basic feasible solutions of the transportation polytope
    n, m = len(a), len(b)
    cost = np.sum((a[:, None] - b[None]) ** 2, axis=-1).ravel()
    rows = [np.kron(np.eye(n)[k], np.ones(m)) for k in range(n)]
    cols = [np.kron(np.ones(n), np.eye(m)[k]) for k in range(m)]
    A = np.array(rows + cols)[:-1]  # one marginal constraint is redundant
    rhs = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])[:-1]
    best = np.inf
    vertices = 0
    for basis in itertools.combinations(range(n * m), n + m - 1):
        sub = A[:, basis]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, rhs)
        if np.all(x >= -1e-14):
            vertices += 1
            best = min(best, float(cost[list(basis)] @ x))
    assert vertices > 0
    return best


def test_w2_exact_examples():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((20, 3))
    assert w2_exact(a, a).cost == 0.0
    h = np.array([0.5, -1.0, 2.0])
    assert_allclose(w2_exact(a, a + h).cost, h @ h, rtol=0, atol=1e-12)
    b = rng.standard_normal((5, 3))
    c = rng.standard_normal((5, 3))
    assert_allclose(w2_exact(b, c).cost, brute_force_w2(b, c), rtol=0, atol=1e-12)
    res = w2_exact(b, c)
    assert_allclose(res.distance, math.sqrt(res.cost))
    assert_allclose(np.mean(np.sum((b - c[res.plan]) ** 2, axis=1)), res.cost, rtol=1e-15)
    # a shuffled copy is at distance zero
    assert w2_exact(a, a[rng.permutation(20)]).cost == 0.0


@pytest.mark.parametrize("n", range(1, 8))
def test_exact_solver_matches_permutation_search(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        a, b = rng.standard_normal((2, n, 3))
        assert_allclose(w2_exact(a, b).cost, brute_force_w2(a, b), rtol=1e-12, atol=1e-14)


def test_w2_exact_errors():
    with pytest.raises(InputError):
        w2_exact(np.zeros((3, 3)), np.zeros((4, 3)))
    with pytest.raises(CapacityError):
        w2_exact(np.zeros((10, 3)), np.zeros((10, 3)), max_n=8)
    with pytest.raises(InputError):
        w2_exact(np.array([[np.nan, 0, 0]]), np.zeros((1, 3)))


def test_metric_axioms():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 65))
        a, b, c = rng.standard_normal((3, n, 3)) * rng.exponential(size=(3, 1, 1))
        ab = w2_exact(a, b).distance
        assert abs(ab - w2_exact(b, a).distance) <= 1e-12 * (1 + ab)
        assert w2_exact(a, c).distance <= ab + w2_exact(b, c).distance + 1e-9


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(1, 30),
    lam=st.floats(min_value=-1e3, max_value=1e3).filter(lambda x: abs(x) > 1e-3),
    seed=st.integers(0, 2 ** 32 - 1),
)
def test_scaling_and_translation(n, lam, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((2, n, 3))
    base = w2_exact(a, b).distance
    assert_allclose(w2_exact(lam * a, lam * b).distance, abs(lam) * base, rtol=1e-10, atol=1e-300)
    h = rng.standard_normal(3)
    assert abs(w2_exact(a, a + h).cost - h @ h) <= 1e-12 * (1 + h @ h)


def test_w2_unequal_examples():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((2, 40, 3))
    assert_allclose(w2_unequal(a, b).cost, w2_exact(a, b).cost, rtol=1e-10)
    x = np.array([[0.3, -0.2, 1.0]])
    m = rng.standard_normal((9, 3))
    assert_allclose(w2_unequal(x, m).cost, np.mean(np.sum((x - m) ** 2, axis=1)), rtol=1e-12)
    small = rng.standard_normal((2, 3))
    big = rng.standard_normal((4, 3))
    assert_allclose(w2_unequal(small, big).cost, brute_force_transport(small, big), rtol=1e-10)
    res = w2_unequal(small, big)
    assert_allclose(res.plan.sum(axis=1), 0.5)
    assert_allclose(res.plan.sum(axis=0), 0.25)


def test_w2_unequal_against_vertex_enumeration_random():
    rng = np.random.default_rng(3)
    for n, m in [(2, 3), (3, 2), (2, 5), (3, 4)]:
        a = rng.standard_normal((n, 3))
        b = rng.standard_normal((m, 3))
        assert_allclose(w2_unequal(a, b).cost, brute_force_transport(a, b), rtol=1e-10)


def test_w2_unequal_errors():
    with pytest.raises(CapacityError, match="at most 10 points"):
        w2_unequal(np.zeros((10, 3)), np.zeros((30, 3)), max_entries=100)
    with pytest.raises(InputError):
        w2_unequal(np.zeros((3, 3)), np.zeros((3, 2)))


def test_slope_fit_examples():
    x = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
    fit = slope_fit(x, x ** 2)
    assert_allclose(fit["slope"], 2.0, rtol=1e-13)
    assert fit["ci"][1] - fit["ci"][0] <= 1e-12
    fit = slope_fit(x, 7.0 * x ** (-1.0 / 3.0))
    assert abs(fit["slope"] + 1.0 / 3.0) <= 1e-12
    assert_allclose(math.exp(fit["intercept"]), 7.0, rtol=1e-12)
    rng = np.random.default_rng(0)
    xs = np.logspace(0, 3, 20)
    fit = slope_fit(xs, xs ** -0.5 * np.exp(rng.normal(0.0, 0.1, xs.size)))
    assert -0.6 <= fit["slope"] <= -0.4
    assert fit["ci"][0] < fit["slope"] < fit["ci"][1]
    with pytest.raises(InputError):
        slope_fit([1.0, 2.0, 3.0], [1.0, 0.0, 2.0])
    with pytest.raises(InputError):
        slope_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(InputError):
        slope_fit([1.0, 1.0, 2.0], [1.0, 2.0, 3.0])


def test_epsilon_estimate():
    dirac = epsilon_N_estimate(PointMass((1.0, 2.0, 3.0)).sample, 16, replicas=30)
    assert dirac["mean"] == 0.0 and dirac["se"] == 0.0
    gauss = Maxwellian(1.0).sample
    est = {N: epsilon_N_estimate(gauss, N, replicas=30, seed=4) for N in (32, 64, 128)}
    assert est[64]["M"] == 512
    assert all(e["mean"] > 0 for e in est.values())
    assert est[32]["mean"] > est[64]["mean"] > est[128]["mean"]
    assert epsilon_N_estimate(gauss, 64, replicas=30, reference_size=1024, seed=4)["M"] == 1024
    with pytest.raises(InputError):
        epsilon_N_estimate(gauss, 64, replicas=30, reference_size=100)
    with pytest.raises(InputError):
        epsilon_N_estimate(gauss, 64, replicas=10)


def _radial_tail_oracle(r_max, s):
    val, _ = integrate.quad(lambda r: 4 * math.pi * r * r * (1 + r * r) ** (-s), r_max, np.inf)
    return val


def test_sobolev_matches_direct_three_dimensional_quadrature():
    # brute force over |xi| <= R with plane waves; past R only the 1/N diagonal survives
    rng = np.random.default_rng(5)
    pts = rng.standard_normal((3, 3))
    R = 20.0
    x, w = np.polynomial.legendre.leggauss(16)
    edges = np.arange(0.0, R + 0.5, 0.5)
    r = (0.5 * (edges[1:] + edges[:-1])[:, None] + 0.25 * x[None]).ravel()
    wr = np.tile(0.25 * w, edges.size - 1)
    u, wu = np.polynomial.legendre.leggauss(192)
    phi = 2 * np.pi * np.arange(192) / 192
    total = 0.0
    for ri, wi in zip(r, wr):
        sin_t = np.sqrt(1 - u ** 2)
        xi = ri * np.stack([
            sin_t[:, None] * np.cos(phi)[None], sin_t[:, None] * np.sin(phi)[None],
            np.broadcast_to(u[:, None], (u.size, phi.size)),
        ], axis=-1)
        mu_hat = np.exp(1j * xi @ pts.T).mean(axis=-1)
        diff = np.abs(math.exp(-0.5 * ri * ri) - mu_hat) ** 2
        ang = (wu[:, None] * diff).sum() * (2 * np.pi / phi.size)
        total += wi * ri * ri * (1 + ri * ri) ** -2 * ang
    expected = total + _radial_tail_oracle(R, 2.0) / len(pts)
    got = sobolev_distance_sq(pts, gaussian_charfun(1.0), s=2.0, r_max=R)
    assert_allclose(got, expected, rtol=1e-6)


def test_sobolev_examples():
    zero = np.zeros((7, 3))
    assert abs(sobolev_distance_sq(zero, lambda r: np.ones_like(r))) <= 1e-12
    with pytest.raises(InputError):
        sobolev_distance_sq(zero, gaussian_charfun(), s=1.5)
    with pytest.raises(InputError):
        sobolev_expectation(10, lambda r: np.exp(-r * r), s=1.0)
    # the default tail matches an independent integral of the tail
    one = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    coarse = sobolev_distance_sq(one, lambda r: np.ones_like(r), r_max=50.0)
    fine = sobolev_distance_sq(one, lambda r: np.ones_like(r), r_max=200.0)
    assert_allclose(coarse, fine, rtol=1e-4)


def test_sobolev_expectation_matches_monte_carlo():
    N = 16
    f_hat = gaussian_charfun(1.0)
    vals = []
    for r in range(200):
        pts = np.random.default_rng([6, r]).standard_normal((N, 3))
        vals.append(sobolev_distance_sq(pts, f_hat))
    vals = np.array(vals)
    target = sobolev_expectation(N, lambda r: np.exp(-r * r))
    assert abs(vals.mean() - target) <= 4 * vals.std(ddof=1) / math.sqrt(len(vals))
    big = [sobolev_distance_sq(np.random.default_rng([7, r]).standard_normal((128, 3)), f_hat) for r in range(20)]
    assert np.mean(big) < vals.mean()
