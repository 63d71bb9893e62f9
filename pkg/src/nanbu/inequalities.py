"""Numerical certification of the coupling estimate and its supporting bounds.

For two collision pairs ``(v, v*)`` and ``(vt, vt*)`` the coupled squared
distance after one collision is integrated by brute force over the intensity
``z`` and the azimuth ``phi`` (the second pair uses the aligned azimuth
``phi + phi0``) and compared with the three-term majorant

* ``A1 = 2 x xt int_0^K (G(z/x^g) - G(z/xt^g))^2 dz``
* ``A2 = -[(v - vt) + (v* - vt*)] . [X Phi_K(x) - Xt Phi_K(xt)]``
* ``A3 = (x^2 + 2 |v - vt| x) Psi_K(x)``

with ``X = v - v*``, ``x = |X|`` and likewise for the tilded pair.

Quadrature layout: ``phi`` uses the periodic trapezoid rule, which is exact
here once there are at least three nodes because every ``phi``-integrand is a
trigonometric polynomial of degree two.  ``z`` uses 16-point Gauss-Legendre
panels whose breakpoints follow the natural scales ``x^g * 2^k`` of both pairs
(plus the support ends of the hard-sphere angle); a 12-point rule on the same
panels gives the error estimate.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import QuadratureError
from .geometry import _frame, tanaka_angles
from .kernel import HALF_PI, Family, cutoff_weight, deviation_angle, scaled_angle, tail_weight

PANEL_POWERS = np.arange(-6, 13)
DEFAULT_PHI_NODES = 256
BATCH_PHI_NODES = 8
TOLERANCE_SCALE = 1e-6


# ---------------------------------------------------------------- sampling


def stress_quadruples(n, rng, cap=50.0, tail_index=4.0):
    """``(n, 4, 3)`` velocities: half standard Gaussian, half heavy-tailed.

    The heavy half has uniform directions and Pareto(``tail_index``) speeds on
    ``[1, cap]``.
    """
    n_gauss = n // 2
    gauss = rng.standard_normal((n_gauss, 4, 3))
    m = n - n_gauss
    d = rng.standard_normal((m, 4, 3))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    speed = np.minimum((1.0 - rng.random((m, 4))) ** (-1.0 / tail_index), cap)
    return np.concatenate([gauss, d * speed[..., None]], axis=0)


def _split(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-2:] != (4, 3):
        raise ValueError("quadruples must have shape (..., 4, 3)")
    return q[..., 0, :], q[..., 1, :], q[..., 2, :], q[..., 3, :]


# ---------------------------------------------------------------- z panels


def _breakpoints(scales, K, spec):
    # per row: 0, K, scale * 2^k for every scale, hard-sphere support ends
    scales = np.asarray(scales, dtype=float)
    pts = [np.zeros(scales.shape[0]), np.full(scales.shape[0], float(K))]
    for k in PANEL_POWERS:
        pts.extend(scales.T * 2.0 ** k)
    if not spec.power_law:
        pts.extend(scales.T * HALF_PI)
    b = np.clip(np.stack(pts, axis=1), 0.0, K)
    return np.sort(b, axis=1)


def _gl_nodes(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    lo = breaks[:, :-1]
    half = 0.5 * (breaks[:, 1:] - lo)
    z = (lo + half)[..., None] + half[..., None] * x
    wz = half[..., None] * w
    B = breaks.shape[0]
    return z.reshape(B, -1), wz.reshape(B, -1)


def _rows_scale(x, spec):
    return np.ones_like(x) if spec.gamma == 0.0 else x ** spec.gamma


# ---------------------------------------------------------------- LHS


def _lhs_core(v, vs, vt, vts, K, spec, n_phi, order):
    X = v - vs
    Xt = vt - vts
    x = np.linalg.norm(X, axis=-1)
    xt = np.linalg.norm(Xt, axis=-1)
    scales = np.stack([_rows_scale(x, spec), _rows_scale(xt, spec)], axis=1)
    z, wz = _gl_nodes(_breakpoints(scales, K, spec), order)
    th = scaled_angle(z, x[:, None], spec)
    tht = scaled_angle(z, xt[:, None], spec)
    phi0, _ = tanaka_angles(X, Xt)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    I, J = _frame(X)
    It, Jt = _frame(Xt)
    # Gamma along the phi grid: (B, n_phi, 3)
    gam = np.cos(phi)[None, :, None] * I[:, None, :] + np.sin(phi)[None, :, None] * J[:, None, :]
    pt = phi[None, :] + phi0[:, None]
    gamt = np.cos(pt)[..., None] * It[:, None, :] + np.sin(pt)[..., None] * Jt[:, None, :]
    r = -np.sin(0.5 * th) ** 2
    h = 0.5 * np.sin(th)
    rt = -np.sin(0.5 * tht) ** 2
    ht = 0.5 * np.sin(tht)
    # c - ct at every (z, phi): (B, Z, n_phi, 3)
    diff = (
        (r[..., None] * X[:, None, :])[:, :, None, :]
        + h[:, :, None, None] * gam[:, None, :, :]
        - (rt[..., None] * Xt[:, None, :])[:, :, None, :]
        - ht[:, :, None, None] * gamt[:, None, :, :]
    )
    dv = v - vt
    f = np.einsum("bzpk,bzpk->bzp", diff, diff) + 2.0 * np.einsum("bzpk,bk->bzp", diff, dv)
    inner = f.mean(axis=2) * (2.0 * math.pi)
    body = np.sum(wz * inner, axis=1)
    tail = tail_weight(x, K, spec) * (x ** 2 - 2.0 * np.einsum("bk,bk->b", dv, X))
    return body + tail


def _batched(fn, q, n_phi, budget=2_000_000):
    q = np.asarray(q, dtype=float)
    flat = q.reshape(-1, 4, 3)
    per_row = 64 * n_phi * 16 * 3
    step = max(1, budget // per_row)
    out = [fn(flat[lo:lo + step]) for lo in range(0, flat.shape[0], step)]
    res = np.concatenate(out) if out else np.zeros(0)
    return res.reshape(q.shape[:-2])


def lhs_fundest(q, K, spec, n_phi=DEFAULT_PHI_NODES, with_error=False):
    """Brute-force value of the coupled one-collision increment.

    ``int_0^inf int_0^2pi |v + c - vt - ct_K|^2 - |v - vt|^2 dphi dz`` where ``c``
    is untruncated, ``ct_K`` is truncated at ``K`` and evaluated at the aligned
    azimuth.  The ``z > K`` part reduces to ``Psi_K(x)(x^2 - 2 (v - vt) . X)`` and
    is added in closed form.  With ``with_error`` the pair ``(value, error)`` is
    returned, the error being the gap to a lower-order rule.
    """

    def go(order):
        def fn(block):
            return _lhs_core(*_split(block), K, spec, n_phi, order)

        return _batched(fn, q, n_phi)

    hi = go(16)
    if not with_error:
        return hi[()]
    lo = go(12)
    return hi[()], np.abs(hi - lo)[()]


def _g_gap_integral(x, xt, K, spec, order=16):
    scales = np.stack([_rows_scale(x, spec), _rows_scale(xt, spec)], axis=1)
    z, wz = _gl_nodes(_breakpoints(scales, K, spec), order)
    d = scaled_angle(z, x[:, None], spec) - scaled_angle(z, xt[:, None], spec)
    return np.sum(wz * d * d, axis=1)


def a_terms(q, K, spec, with_error=False):
    """``(A1, A2, A3)`` for each quadruple; arrays broadcast over leading axes."""
    v, vs, vt, vts = (np.asarray(a).reshape(-1, 3) for a in _split(q))
    shape = np.asarray(q).shape[:-2]
    X = v - vs
    Xt = vt - vts
    x = np.linalg.norm(X, axis=-1)
    xt = np.linalg.norm(Xt, axis=-1)
    gap = _g_gap_integral(x, xt, K, spec)
    A1 = 2.0 * x * xt * gap
    phi_x = cutoff_weight(x, K, spec)
    phi_xt = cutoff_weight(xt, K, spec)
    s = (v - vt) + (vs - vts)
    A2 = -np.einsum("bk,bk->b", s, X * np.atleast_1d(phi_x)[:, None] - Xt * np.atleast_1d(phi_xt)[:, None])
    A3 = (x ** 2 + 2.0 * np.linalg.norm(v - vt, axis=-1) * x) * tail_weight(x, K, spec)
    out = tuple(a.reshape(shape)[()] for a in (A1, A2, A3))
    if not with_error:
        return out
    err = 2.0 * x * xt * np.abs(gap - _g_gap_integral(x, xt, K, spec, order=12))
    return out, err.reshape(shape)[()]


def closed_pieces(q, K, spec, n_phi=BATCH_PHI_NODES):
    """Brute-force ``int_0^K int_0^2pi |c|^2`` and ``int_0^K int_0^2pi c`` for ``(v, v*)``.

    Only the first pair of each quadruple is used.  Returns ``(square, vector)``
    with shapes ``(B,)`` and ``(B, 3)``.
    """
    v, vs, _, _ = (np.asarray(a).reshape(-1, 3) for a in _split(q))
    X = v - vs
    x = np.linalg.norm(X, axis=-1)
    s = _rows_scale(x, spec)
    z, wz = _gl_nodes(_breakpoints(np.stack([s, s], axis=1), K, spec), 16)
    th = scaled_angle(z, x[:, None], spec)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    I, J = _frame(X)
    gam = np.cos(phi)[None, :, None] * I[:, None, :] + np.sin(phi)[None, :, None] * J[:, None, :]
    r = -np.sin(0.5 * th) ** 2
    h = 0.5 * np.sin(th)
    c = (r[..., None] * X[:, None, :])[:, :, None, :] + h[:, :, None, None] * gam[:, None, :, :]
    sq = np.einsum("bzpk,bzpk->bz", c, c) * (2.0 * math.pi / n_phi)
    vec = c.sum(axis=2) * (2.0 * math.pi / n_phi)
    return np.sum(wz * sq, axis=1), np.einsum("bz,bzk->bk", wz, vec)


# ---------------------------------------------------------------- reports


@dataclass
class InequalityReport:
    """Outcome of one certification run.

    ``worst_margin`` is the smallest ``(RHS - LHS)`` seen (for bound checks:
    ``1 - ratio / constant``); ``violations`` counts margins below minus the
    tolerance; ``witnesses`` holds the worst inputs.
    """

    name: str
    kernel: str
    samples: int
    worst_margin: float
    violations: int
    quad_error: float = 0.0
    K: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _witness(q, K, **extra):
    return {"K": float(K), "quadruple": np.asarray(q).tolist(), **{k: float(v) for k, v in extra.items()}}


def check_fundest(samples, K_list, spec, tolerance=TOLERANCE_SCALE, seed=0, n_phi=BATCH_PHI_NODES, quads=None):
    """Certify ``LHS <= A1 + A2 + A3`` on stress-sampled quadruples.

    The allowed slack per quadruple is ``tolerance * (1 + sum of |velocity|^2)``
    plus the estimated quadrature error of both sides.
    """
    if quads is None:
        quads = stress_quadruples(samples, np.random.default_rng(seed))
    quads = np.asarray(quads, dtype=float).reshape(-1, 4, 3)
    scale = 1.0 + np.einsum("bik,bik->b", quads, quads)
    worst = math.inf
    worst_rel = math.inf
    violations = 0
    qerr = 0.0
    witnesses = []
    for K in K_list:
        lhs, lerr = lhs_fundest(quads, K, spec, n_phi=n_phi, with_error=True)
        (A1, A2, A3), aerr = a_terms(quads, K, spec, with_error=True)
        margin = A1 + A2 + A3 - lhs
        err = lerr + aerr
        tol = tolerance * scale + err
        bad = margin < -tol
        violations += int(bad.sum())
        qerr = max(qerr, float(err.max()))
        rel = margin / scale
        k = int(np.argmin(rel))
        if rel[k] < worst_rel:
            worst_rel = float(rel[k])
            worst = float(margin[k])
        for b in np.flatnonzero(bad)[:5]:
            witnesses.append(_witness(quads[b], K, lhs=lhs[b], A1=A1[b], A2=A2[b], A3=A3[b]))
    return InequalityReport(
        name="coupled_increment_bound",
        kernel=spec.label(),
        samples=int(quads.shape[0]),
        worst_margin=worst,
        violations=violations,
        quad_error=qerr,
        K=[float(k) for k in K_list],
        constants={"worst_relative_margin": worst_rel},
        witnesses=witnesses,
    )


def maxwell_a2(q, K, spec):
    """``zeta_K (|v* - vt*|^2 - |v - vt|^2)``, the Maxwell-molecule value of A2."""
    v, vs, vt, vts = _split(q)
    zeta = cutoff_weight(1.0, K, spec)
    return zeta * (np.sum((vs - vts) ** 2, axis=-1) - np.sum((v - vt) ** 2, axis=-1))


# ---------------------------------------------------------------- (G(z/x) - G(z/y))^2


def g_squared_gap(x, y, spec):
    """``int_0^inf (G(z/x) - G(z/y))^2 dz`` by adaptive quadrature.

    Power-law kernels: geometric panels up to ``Z = 1e6 max(x, y)`` and the
    leading-order tail ``(x^(1/nu) - y^(1/nu))^2 (nu z)^(-2/nu)`` beyond.
    Hard spheres: the integrand vanishes past ``(pi/2) max(x, y)``.
    """
    x = float(x)
    y = float(y)
    if x == y:
        return 0.0
    f = lambda z: (float(deviation_angle(z / x, spec)) - float(deviation_angle(z / y, spec))) ** 2
    lo_s, hi_s = min(x, y), max(x, y)
    if not spec.power_law:
        edges = [0.0, HALF_PI * lo_s, HALF_PI * hi_s]
        tail = 0.0
    else:
        nu = spec.nu
        z_star = 1e6 * hi_s
        edges = [0.0]
        p = lo_s / 16.0
        while p < z_star:
            edges.append(p)
            p *= 4.0
        edges.append(z_star)
        amp = (x ** (1.0 / nu) - y ** (1.0 / nu)) ** 2 * nu ** (-2.0 / nu)
        tail = amp * z_star ** (1.0 - 2.0 / nu) / (2.0 / nu - 1.0)
    val = err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            vv, ee = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-11, limit=200)
            val += vv
            err += ee
    if err > 1e-8 * max(val, 1e-300):
        raise QuadratureError("G-gap integral did not converge", val, err)
    return val + tail


def g_squared_gap_hard_sphere(x, y):
    """Closed form of the hard-sphere G-gap integral."""
    x, y = sorted((float(x), float(y)))
    if x == y:
        return 0.0
    first = (1.0 / x - 1.0 / y) ** 2 * (HALF_PI * x) ** 3 / 3.0
    second = y * (HALF_PI * (1.0 - x / y)) ** 3 / 3.0
    return first + second


def check_G_squared_diff(x_grid, y_grid, spec):
    """Empirical sup of ``gap(x, y) (x + y) / (x - y)^2`` over the grid (pairs with x != y)."""
    sup = 0.0
    arg = None
    for x in np.asarray(x_grid, dtype=float):
        for y in np.asarray(y_grid, dtype=float):
            if x == y:
                continue
            ratio = g_squared_gap(x, y, spec) * (x + y) / (x - y) ** 2
            if ratio > sup:
                sup, arg = ratio, (float(x), float(y))
    return {"constant": sup, "argmax": arg, "finite": math.isfinite(sup)}


# ---------------------------------------------------------------- regularity of Phi_K


def phi_limit_constant(spec):
    """``pi int_0^{pi/2} (1 - cos t) beta(t) dt``, the supremum of ``Phi_K(x) / x^gamma``."""
    return float(cutoff_weight(1.0, 1e300, spec)) if spec.power_law else math.pi * (HALF_PI - 1.0)


def check_phiK_regularity(K_list, spec, grid=None, n_vectors=2000, seed=0):
    """Empirical sups of the three regularity ratios of ``Phi_K`` for each K.

    * ``Phi_K(x) / x^g``
    * ``|Phi_K(x) - Phi_K(y)| / |x^g - y^g|`` (for Maxwell molecules the
      numerator itself, which must vanish)
    * ``|X Phi_K(|X|) - Y Phi_K(|Y|)| / (|X - Y| (|X|^g + |Y|^g))`` on random vectors
    """
    g = spec.gamma
    grid = np.logspace(-3, 3, 61) if grid is None else np.asarray(grid, dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n_vectors, 3)) * np.exp(rng.uniform(-4, 4, (n_vectors, 1)))
    Y = X + rng.standard_normal((n_vectors, 3)) * np.exp(rng.uniform(-6, 2, (n_vectors, 1)))
    out = {}
    for K in K_list:
        vals = cutoff_weight(grid, K, spec)
        ratio1 = float(np.max(vals / _rows_scale(grid, spec)))
        xa, ya = np.meshgrid(grid, grid, indexing="ij")
        dv = np.abs(vals[:, None] - vals[None, :])
        if g == 0.0:
            ratio2 = float(dv.max())
        else:
            den = np.abs(xa ** g - ya ** g)
            mask = den > 0
            ratio2 = float(np.max(dv[mask] / den[mask]))
        nx = np.linalg.norm(X, axis=1)
        ny = np.linalg.norm(Y, axis=1)
        num = np.linalg.norm(X * cutoff_weight(nx, K, spec)[:, None] - Y * cutoff_weight(ny, K, spec)[:, None], axis=1)
        den3 = np.linalg.norm(X - Y, axis=1) * (_rows_scale(nx, spec) + _rows_scale(ny, spec))
        ratio3 = float(np.max(num / den3))
        out[float(K)] = {"value_ratio": ratio1, "difference_ratio": ratio2, "vector_ratio": ratio3}
    return out


# ---------------------------------------------------------------- A3 majorants


def a3_majorant(q, K, spec, exp_rate=3.0):
    """Kernel-specific majorant of A3 with unit constant.

    * Maxwell: ``(|v|^2 + |v*|^2 + |vt|^2) K^(1 - 2/nu)``
    * hard potentials: ``(1 + |v|^p + |v*|^p + |vt|^2 + |vt*|^2) K^(1 - 2/nu)``,
      ``p = 4 gamma / nu + 2``
    * hard spheres (exponent ``q = 1``, auxiliary velocity at the origin):
      ``(1 + |vt|) exp(-K) exp(exp_rate (|v| + |v*|))``
    """
    v, vs, vt, vts = _split(q)
    n = lambda a: np.linalg.norm(a, axis=-1)
    if spec.family is Family.MAXWELL:
        return (n(v) ** 2 + n(vs) ** 2 + n(vt) ** 2) * K ** spec.cutoff_exponent
    if spec.family is Family.HARD_POTENTIAL:
        p = 4.0 * spec.gamma / spec.nu + 2.0
        return (1.0 + n(v) ** p + n(vs) ** p + n(vt) ** 2 + n(vts) ** 2) * K ** spec.cutoff_exponent
    with np.errstate(over="ignore"):
        return (1.0 + n(vt)) * np.exp(-K + exp_rate * (n(v) + n(vs)))


def check_A3_bounds(samples, spec, K_list, seed=0, safety=2.0, calibration_fraction=0.5, quads=None):
    """Fit the constant of the A3 majorant on a calibration split, then test.

    The constant is ``safety`` times the largest calibration ratio; the report
    counts test quadruples whose ratio exceeds it.
    """
    if quads is None:
        quads = stress_quadruples(samples, np.random.default_rng(seed))
    quads = np.asarray(quads, dtype=float).reshape(-1, 4, 3)
    n_cal = int(calibration_fraction * quads.shape[0])
    ratios = []
    for K in K_list:
        _, _, A3 = a_terms(quads, K, spec)
        maj = a3_majorant(quads, K, spec)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios.append(np.where(A3 == 0.0, 0.0, A3 / maj))
    ratios = np.stack(ratios, axis=1)
    const = safety * float(ratios[:n_cal].max())
    test = ratios[n_cal:]
    if const > 0:
        rel = test / const
    else:
        rel = np.where(test > 0, np.inf, 0.0)
    worst = float(rel.max()) if rel.size else 0.0
    bad = np.argwhere(rel > 1.0)
    witnesses = [_witness(quads[n_cal + b], K_list[k], ratio=test[b, k]) for b, k in bad[:5]]
    return InequalityReport(
        name="tail_term_bound",
        kernel=spec.label(),
        samples=int(quads.shape[0] - n_cal),
        worst_margin=1.0 - worst,
        violations=int(bad.shape[0]),
        K=[float(k) for k in K_list],
        constants={"C": const, "calibration_max": const / safety if safety else 0.0, "safety": safety},
        witnesses=witnesses,
    )
