import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from nanbu.inequalities import (
    a3_majorant,
    a_terms,
    check_A3_bounds,
    check_fundest,
    check_G_squared_diff,
    check_phiK_regularity,
    closed_pieces,
    g_squared_gap,
    g_squared_gap_hard_sphere,
    lhs_fundest,
    maxwell_a2,
    phi_limit_constant,
    stress_quadruples,
)
from nanbu.kernel import HALF_PI, KernelSpec, cutoff_weight, tail_weight
from nanbu.transport import slope_fit

MAXWELL = KernelSpec.maxwell(0.5)
HARD_POT = KernelSpec.hard_potential(0.5, 0.5)
HARD_SPHERE = KernelSpec.hard_sphere()
ALL_KERNELS = [MAXWELL, HARD_POT, HARD_SPHERE]
ids = lambda s: s.label()


def _quads(n, seed):
    return stress_quadruples(n, np.random.default_rng(seed))


def test_stress_sampler_shape_and_tails():
    q = _quads(1000, 0)
    assert q.shape == (1000, 4, 3)
    speed = np.linalg.norm(q[500:], axis=-1)
    assert speed.min() >= 1.0 - 1e-12 and speed.max() <= 50.0 + 1e-12
    assert np.mean(speed > 3.0) > 0.005


@pytest.mark.parametrize("spec", ALL_KERNELS, ids=ids)
def test_identical_pairs_have_zero_margin(spec):
    q = _quads(40, 1)
    q[:, 2] = q[:, 0]
    q[:, 3] = q[:, 1]
    K = 4.0
    A1, A2, A3 = a_terms(q, K, spec)
    assert np.all(A1 == 0.0) and np.all(A2 == 0.0)
    lhs = lhs_fundest(q, K, spec, n_phi=8)
    # only z > K contributes to both sides
    x = np.linalg.norm(q[:, 0] - q[:, 1], axis=-1)
    assert_allclose(lhs, x ** 2 * tail_weight(x, K, spec), rtol=1e-12, atol=1e-14)
    assert np.all(A3 - lhs >= -1e-12 * (1 + A3))


@pytest.mark.parametrize("spec", ALL_KERNELS, ids=ids)
def test_lhs_when_first_pair_coincides(spec):
    # c = 0, so the integrand is |ct|^2 - 2 (v - vt) . ct over z <= K
    q = _quads(50, 2)
    q[:, 1] = q[:, 0]
    K = 8.0
    Xt = q[:, 2] - q[:, 3]
    xt = np.linalg.norm(Xt, axis=-1)
    phi = cutoff_weight(xt, K, spec)
    expected = xt ** 2 * phi + 2.0 * np.einsum("bk,bk->b", q[:, 0] - q[:, 2], Xt) * phi
    assert_allclose(lhs_fundest(q, K, spec, n_phi=8), expected, rtol=1e-8, atol=1e-10 * (1 + xt.max() ** 2))


@pytest.mark.parametrize("spec", ALL_KERNELS, ids=ids)
def test_lhs_quadrature_is_stable_under_refinement(spec):
    q = _quads(30, 3)
    K = 8.0
    coarse = lhs_fundest(q, K, spec, n_phi=4)
    mid = lhs_fundest(q, K, spec, n_phi=8)
    fine = lhs_fundest(q, K, spec, n_phi=256)
    scale = 1 + np.sum(q ** 2, axis=(1, 2))
    assert np.max(np.abs(mid - fine) / scale) <= 1e-12
    assert np.max(np.abs(coarse - fine) / scale) <= 1e-12
    value, err = lhs_fundest(q, K, spec, n_phi=8, with_error=True)
    assert np.all(err <= 1e-8 * scale)
    assert np.max(np.abs(value - fine) / scale) <= 1e-12


@pytest.mark.parametrize("spec", ALL_KERNELS, ids=ids)
def test_closed_pieces_match_phi(spec):
    q = _quads(300, 4)
    for K in (1.0, 8.0, 64.0):
        sq, vec = closed_pieces(q, K, spec)
        X = q[:, 0] - q[:, 1]
        x = np.linalg.norm(X, axis=-1)
        phi = cutoff_weight(x, K, spec)
        assert_allclose(sq, x ** 2 * phi, rtol=1e-8)
        assert_allclose(vec, -X * phi[:, None], rtol=1e-8, atol=1e-8 * np.abs(X * phi[:, None]).max())


def test_maxwell_specialization():
    q = _quads(2000, 5)
    for K in (1.0, 8.0, 64.0):
        (A1, A2, _), err = a_terms(q, K, MAXWELL, with_error=True)
        assert np.all(A1 == 0.0)
        scale = 1 + np.sum(q ** 2, axis=(1, 2))
        assert np.max(np.abs(A2 - maxwell_a2(q, K, MAXWELL)) / scale) <= 1e-9


@pytest.mark.parametrize("spec", ALL_KERNELS, ids=ids)
def test_a2_flips_sign_when_partners_swap(spec):
    q = _quads(10_000, 6)
    A2 = a_terms(q, 8.0, spec)[1]
    swapped = a_terms(q[:, [1, 0, 3, 2]], 8.0, spec)[1]
    assert np.max(np.abs(A2 + swapped)) <= 1e-10


@pytest.mark.parametrize("spec,K_list", [
    (MAXWELL, (1.0, 8.0, 64.0)),
    (HARD_POT, (1.0, 8.0, 64.0)),
    (HARD_SPHERE, (2.0, 16.0)),
], ids=["maxwell", "hard_potential", "hard_sphere"])
def test_check_fundest_has_no_violations(spec, K_list):
    report = check_fundest(400, K_list, spec, seed=7)
    assert report.passed and report.violations == 0
    assert report.samples == 400 and report.quad_error < 1e-6
    assert math.isfinite(report.worst_margin)
    payload = json.loads(report.to_json())
    assert payload["passed"] is True and payload["K"] == list(K_list)


def test_check_fundest_reports_witnesses_on_a_false_bound(monkeypatch):
    from nanbu import inequalities

    real = inequalities.a_terms

    def shrunk(q, K, spec, with_error=False):
        (A1, A2, A3), err = real(q, K, spec, with_error=True)
        return (A1 - 10.0, A2, A3), err

    monkeypatch.setattr(inequalities, "a_terms", shrunk)
    report = check_fundest(20, (4.0,), MAXWELL, seed=1)
    assert not report.passed and report.violations > 0
    assert report.witnesses and len(report.witnesses[0]["quadruple"]) == 4


def test_g_gap_examples():
    for spec in ALL_KERNELS:
        assert g_squared_gap(1.5, 1.5, spec) == 0.0
    closed = g_squared_gap_hard_sphere(1.0, 2.0)
    assert_allclose(g_squared_gap(1.0, 2.0, HARD_SPHERE), closed, rtol=1e-10)
    assert_allclose(closed, 0.6459640975062462, rtol=1e-14)
    for x, y in [(0.01, 100.0), (3.0, 0.2), (1.0, 1.001)]:
        assert_allclose(g_squared_gap(x, y, HARD_SPHERE), g_squared_gap_hard_sphere(x, y), rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(
    x=st.floats(min_value=0.05, max_value=20.0),
    y=st.floats(min_value=0.05, max_value=20.0),
    lam=st.floats(min_value=0.1, max_value=10.0),
    which=st.sampled_from([0, 2]),
)
def test_g_gap_is_homogeneous(x, y, lam, which):
    # z -> lam z maps the integral for (lam x, lam y) onto lam times the one for (x, y)
    spec = ALL_KERNELS[which]
    base = g_squared_gap(x, y, spec)
    assert_allclose(g_squared_gap(lam * x, lam * y, spec), lam * base, rtol=1e-7, atol=1e-14)


@pytest.mark.parametrize("spec", [MAXWELL, HARD_SPHERE], ids=ids)
def test_g_gap_ratio_is_bounded(spec):
    grid = np.logspace(-2, 2, 7)
    out = check_G_squared_diff(grid, grid, spec)
    assert out["finite"] and 0 < out["constant"] < 10
    # refining the grid does not blow the constant up
    fine = check_G_squared_diff(np.logspace(-2, 2, 13), np.logspace(-2, 2, 13), spec)
    assert fine["constant"] <= 1.5 * out["constant"]


def test_phi_regularity():
    out = check_phiK_regularity((1.0, 8.0, 64.0), MAXWELL, n_vectors=500)
    for rec in out.values():
        assert rec["difference_ratio"] <= 1e-10
    for spec in (HARD_POT, HARD_SPHERE):
        limit = phi_limit_constant(spec)
        out = check_phiK_regularity((1.0, 8.0, 64.0, 512.0), spec, n_vectors=500)
        values = np.array([[r["value_ratio"], r["difference_ratio"], r["vector_ratio"]] for r in out.values()])
        assert np.all(np.isfinite(values))
        assert np.all(values[:, 0] <= limit * (1 + 1e-9))
        # uniform in K: the largest K is no worse than twice the smallest
        assert np.all(values[-1] <= 2 * values[0] + 1e-12)
    assert_allclose(phi_limit_constant(HARD_SPHERE), math.pi * (HALF_PI - 1), rtol=1e-15)


def test_a3_bounds_hold_with_frozen_constants():
    for spec, K_list in [(MAXWELL, (1.0, 8.0, 64.0)), (HARD_POT, (1.0, 8.0, 64.0)), (HARD_SPHERE, (2.0, 4.0, 8.0))]:
        report = check_A3_bounds(2000, spec, K_list, seed=8)
        assert report.passed, report.witnesses
        assert 0 < report.constants["C"] < np.inf


def test_maxwell_a3_scales_with_second_moments():
    # K^(2/nu - 1) Psi_K increases to its limit, so the ratio is bounded uniformly in K
    q = _quads(500, 9)
    Ks = (1.0, 4.0, 16.0, 64.0, 256.0, 4096.0)
    moments = np.sum(q ** 2, axis=(1, 2))
    ratios = np.array([a_terms(q, K, MAXWELL)[2] * K ** (2 / MAXWELL.nu - 1) / moments for K in Ks])
    assert np.all(np.diff(ratios, axis=0) >= -1e-12 * ratios[1:])
    assert np.all(ratios[-1] <= 1.05 * ratios[-2])
    # x^2 + 2 |v - vt| x <= 6 (sum of squared speeds)
    limit = 4096.0 ** (2 / MAXWELL.nu - 1) * tail_weight(1.0, 4096.0, MAXWELL)
    assert ratios.max() <= 6 * limit


def test_hard_sphere_tail_term_vanishes_for_large_cutoff():
    q = _quads(200, 10)
    speeds = np.linalg.norm(q[:, 0] - q[:, 1], axis=-1)
    K = HALF_PI * speeds.max() * 1.01
    assert np.all(a_terms(q, K, HARD_SPHERE)[2] == 0.0)


def test_hard_potential_tail_term_slope():
    # A3 is proportional to Psi_K(x), which behaves like (K + a x^g / nu)^(1 - 2/nu), a = (pi/2)^-nu
    q = _quads(100, 11)
    K = 2.0 ** np.arange(1, 9)
    a = HALF_PI ** -HARD_POT.nu
    target = 1 - 2 / HARD_POT.nu
    for row in q:
        x = np.linalg.norm(row[0] - row[1])
        A3 = np.array([a_terms(row, k, HARD_POT)[2] for k in K])
        shifted = slope_fit(K + a * x ** HARD_POT.gamma / HARD_POT.nu, A3)["slope"]
        assert abs(shifted - target) <= 0.01
        assert abs(slope_fit(K[4:], A3[4:])["slope"] - target) <= 0.15
