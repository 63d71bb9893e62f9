"""Convergence scans, the invariant suite and result files.

A scan is described by a :class:`ScanConfig`, usually read from a flat
``key = value`` file.  Results are rows ``(statistic, N, K, t, value, stderr,
replicas, seed)`` written to ``scan.csv`` next to a ``manifest.json``; both are
byte-identical across re-runs with the same configuration and seed, whatever
the thread count.
"""

import csv
import io
import json
import math
import subprocess
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import geometry, inequalities, sim, transport
from .errors import ConfigError
from .kernel import Family, KernelSpec, cutoff_weight

CSV_COLUMNS = ("statistic", "N", "K", "t", "value", "stderr", "replicas", "seed")
ALL_CHECKS = (
    "geometry",
    "closed_pieces",
    "coupled_bound",
    "maxwell_terms",
    "tail_bound",
    "g_gap",
    "phi_regularity",
    "simulator",
)
MIN_SCAN_REPLICAS = 30
RELIABILITY_FACTOR = 4.0
_REFERENCE_TAG = 1
_SCAN_TAG = 2
_EPSILON_TAG = 3


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class ScanConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec.maxwell)
    N_list: tuple = (64, 128, 256)
    K_list: tuple = (64.0,)
    horizon: float = 1.0
    replicas: int = 30
    N_ref: int = None
    snapshot_times: tuple = None
    seed: int = 0
    out_dir: str = "out"
    initial: object = field(default_factory=sim.Maxwellian)
    align: str = "tanaka"
    threads: int = 1
    checks: tuple = ALL_CHECKS
    samples: int = 1000
    reference_ratio: int = 8

    def __post_init__(self):
        object.__setattr__(self, "N_list", tuple(int(n) for n in self.N_list))
        object.__setattr__(self, "K_list", tuple(sorted(float(k) for k in self.K_list)))
        if self.N_ref is None and self.N_list:
            object.__setattr__(self, "N_ref", 4 * max(self.N_list))
        if self.snapshot_times is None:
            object.__setattr__(self, "snapshot_times", (float(self.horizon),))
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))
        unknown = set(self.checks) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
        if any(n < 2 for n in self.N_list):
            raise ConfigError("every N must be at least 2")
        if any(k < 1.0 for k in self.K_list):
            raise ConfigError("every K must be at least 1")
        if self.horizon < 0 or any(not 0.0 <= t <= self.horizon for t in self.snapshot_times):
            raise ConfigError("snapshot times must lie in [0, T]")

    def describe(self):
        return {
            "kernel": self.kernel.label(),
            "N": list(self.N_list),
            "K": list(self.K_list),
            "T": self.horizon,
            "replicas": self.replicas,
            "N_ref": self.N_ref,
            "snapshot_times": list(self.snapshot_times),
            "seed": self.seed,
            "initial": self.initial.describe(),
            "align": self.align,
            "checks": list(self.checks),
            "samples": self.samples,
            "reference_ratio": self.reference_ratio,
        }


def _floats(text):
    return tuple(float(x) for x in text.replace(" ", "").split(",") if x)


def _ints(text):
    return tuple(int(x) for x in text.replace(" ", "").split(",") if x)


def _kernel(values):
    name = values.pop("kernel", "maxwell")
    nu = float(values.pop("nu", 0.5))
    gamma = values.pop("gamma", None)
    if name == "maxwell":
        return KernelSpec.maxwell(nu)
    if name == "hard_potential":
        return KernelSpec.hard_potential(float(gamma) if gamma is not None else 0.5, nu)
    if name == "hard_sphere":
        return KernelSpec.hard_sphere()
    raise ConfigError(f"unknown kernel {name!r}")


_PARSERS = {
    "N": ("N_list", _ints),
    "K": ("K_list", _floats),
    "T": ("horizon", float),
    "replicas": ("replicas", int),
    "N_ref": ("N_ref", int),
    "snapshot_times": ("snapshot_times", _floats),
    "seed": ("seed", int),
    "out": ("out_dir", str),
    "initial": ("initial", sim.parse_law),
    "align": ("align", str),
    "threads": ("threads", int),
    "checks": ("checks", lambda s: tuple(c for c in s.replace(" ", "").split(",") if c)),
    "samples": ("samples", int),
    "reference_ratio": ("reference_ratio", int),
}
_KERNEL_KEYS = ("kernel", "nu", "gamma")


def parse_config(text):
    """Parse flat ``key = value`` lines; ``#`` starts a comment line.

    Unknown or repeated keys and malformed values raise :class:`ConfigError`.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _PARSERS and key not in _KERNEL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: repeated key {key!r}")
        values[key] = val.strip()
    try:
        kwargs = {"kernel": _kernel(values)}
        for key, val in values.items():
            name, conv = _PARSERS[key]
            kwargs[name] = conv(val)
        return ScanConfig(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return parse_config(text)


def derive_seed(seed, *keys):
    """A 63-bit seed determined by ``seed`` and the integer ``keys``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _scan_seeds(config, tag):
    # a repeated N gets a fresh seed per occurrence; the first keeps the per-N seed
    seen = {}
    for N in config.N_list:
        k = seen.get(N, 0)
        seen[N] = k + 1
        yield N, derive_seed(config.seed, tag, N) if k == 0 else derive_seed(config.seed, tag, N, k)


def _sim_config(config, N, K_levels, seed):
    return sim.SimConfig(
        N=N,
        K_levels=K_levels,
        kernel=config.kernel,
        horizon=config.horizon,
        seed=seed,
        initial=config.initial,
        snapshot_times=config.snapshot_times,
        align=config.align,
    )


def _require_replicas(config):
    if config.replicas < MIN_SCAN_REPLICAS:
        raise ConfigError(f"scan statistics need at least {MIN_SCAN_REPLICAS} replicas")


# ---------------------------------------------------------------- rows


@dataclass(frozen=True, order=True)
class ScanRow:
    statistic: str
    N: int
    K: float
    t: float
    value: float
    stderr: float
    replicas: int
    seed: int


def _row(statistic, N, K, t, values, seed):
    mean, se = transport.mean_and_se(values)
    return ScanRow(statistic, int(N), float(K), float(t), mean, se, len(values), int(seed))


def _parallel(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- scans


def reference_clouds(config, count=1, threads=1):
    """``count`` independent high-resolution runs at the top cutoff (snapshots per time)."""
    K = config.K_list[-1]
    seed = derive_seed(config.seed, _REFERENCE_TAG, config.N_ref)
    cfg = _sim_config(config, config.N_ref, (K,), seed)
    trajs = _parallel(lambda r: sim.run(cfg, r), range(count), threads)
    return [t.velocities[:, 0] for t in trajs]


def run_n_scan(config, threads=None, check_reference=True):
    """W2^2 between N-particle clouds and a reference cloud, for every N and snapshot.

    Returns ``(rows, info)``; ``info`` carries the reference self-consistency
    gap and whether the run is considered reliable (smallest statistic at least
    four times that gap).
    """
    _require_replicas(config)
    if config.N_ref < 4 * max(config.N_list):
        raise ConfigError("N_ref must be at least 4 max(N)")
    threads = config.threads if threads is None else threads
    K = config.K_list[-1]
    refs = reference_clouds(config, 2 if check_reference else 1, threads)
    ref = refs[0]
    fresh = isinstance(config.initial, sim.Maxwellian)
    rows = []
    for N, seed in _scan_seeds(config, _SCAN_TAG):
        cfg = _sim_config(config, N, (K,), seed)

        def one(r):
            traj = sim.run(cfg, r)
            out = []
            for s in range(len(config.snapshot_times)):
                cloud = traj.velocities[s, 0]
                rec = {
                    "w2sq_to_ref": transport.w2_unequal(cloud, ref[s]).cost,
                    "energy_mean": float(np.mean(np.sum(cloud ** 2, axis=1))),
                }
                if fresh:
                    rng = sim.rng_stream(seed, r, 2)
                    sample = config.initial.sample(config.N_ref, rng)
                    rec["w2sq_to_fresh"] = transport.w2_unequal(cloud, sample).cost
                out.append(rec)
            return out

        results = _parallel(one, range(config.replicas), threads)
        for s, t in enumerate(config.snapshot_times):
            for stat in results[0][s]:
                rows.append(_row(stat, N, K, t, [res[s][stat] for res in results], config.seed))
    info = {"K": K, "N_ref": config.N_ref}
    if check_reference:
        gaps = [
            transport.w2_exact(refs[0][s], refs[1][s], max_n=config.N_ref).cost
            for s in range(len(config.snapshot_times))
        ]
        smallest = min(r.value for r in rows if r.statistic == "w2sq_to_ref")
        gap = max(gaps)
        info.update(
            reference_gap=gap,
            reliability_ratio=smallest / gap if gap > 0 else math.inf,
            reliable=bool(gap == 0 or smallest >= RELIABILITY_FACTOR * gap),
        )
    return sorted(rows), info


def run_k_scan(config, threads=None):
    """Coupled-cutoff gaps ``(1/N) sum |V^{K_l} - V^{K_max}|^2`` for every N, K_l and snapshot."""
    _require_replicas(config)
    threads = config.threads if threads is None else threads
    rows = []
    for N, seed in _scan_seeds(config, _SCAN_TAG):
        cfg = _sim_config(config, N, config.K_list, seed)

        def one(r):
            traj = sim.run_coupled_cutoffs(cfg, r)
            top = traj.velocities[:, -1:]
            gap = np.mean(np.sum((traj.velocities - top) ** 2, axis=-1), axis=-1)
            energy = np.mean(np.sum(traj.velocities ** 2, axis=-1), axis=-1)
            return gap, energy

        results = _parallel(one, range(config.replicas), threads)
        for s, t in enumerate(config.snapshot_times):
            for l, K in enumerate(cfg.K_levels):
                rows.append(_row("coupled_gap", N, K, t, [g[s, l] for g, _ in results], config.seed))
                rows.append(_row("energy_mean", N, K, t, [e[s, l] for _, e in results], config.seed))
    return sorted(rows), {"K_max": config.K_list[-1]}


def run_epsilon_scan(config):
    """``epsilonN`` rows for draws from the initial law, one per N."""
    _require_replicas(config)
    rows = []
    sampler = config.initial.sample
    for N, seed in _scan_seeds(config, _EPSILON_TAG):
        est = transport.epsilon_N_estimate(
            sampler, N, config.replicas, config.reference_ratio * N, seed,
            min_ratio=config.reference_ratio,
        )
        rows.append(ScanRow("epsilonN", N, 0.0, 0.0, est["mean"], est["se"], config.replicas, config.seed))
    return sorted(rows), {"reference_ratio": config.reference_ratio}


def fit_rows(rows, statistic, along, t=None, exclude_zero=True):
    """Log-log slope of ``statistic`` against ``N`` or ``K`` (at the last snapshot by default)."""
    sel = [r for r in rows if r.statistic == statistic]
    if not sel:
        return None
    t = max(r.t for r in sel) if t is None else t
    sel = [r for r in sel if r.t == t and (r.value > 0 or not exclude_zero)]
    groups = {}
    for r in sel:
        groups.setdefault(getattr(r, along), []).append(r.value)
    if len(groups) < 3:
        return None
    xs = sorted(groups)
    ys = [float(np.mean(groups[x])) for x in xs]
    fit = transport.slope_fit(xs, ys)
    fit["spearman"] = float(stats.spearmanr(xs, ys).statistic)
    fit["t"] = t
    return fit


# ---------------------------------------------------------------- invariant suite


def _check(name, passed, **details):
    return {"check": name, "passed": bool(passed), **details}


def _geometry_checks(rng, n):
    X = rng.standard_normal((n, 3)) * rng.exponential(size=(n, 1))
    Y = rng.standard_normal((n, 3)) * rng.exponential(size=(n, 1))
    phi = rng.uniform(0, 2 * np.pi, n)
    phi0, phi1 = geometry.tanaka_angles(X, Y)
    g1 = geometry.azimuth_vector(X, phi)
    g2 = geometry.azimuth_vector(Y, phi + phi0)
    nx, ny = np.linalg.norm(X, axis=1), np.linalg.norm(Y, axis=1)
    lhs = np.sum(g1 * g2, axis=1)
    rhs = np.sum(X * Y, axis=1) * np.cos(phi + phi1) ** 2 + nx * ny * np.sin(phi + phi1) ** 2
    dot_res = float(np.max(np.abs(lhs - rhs) / (nx * ny)))
    excess = float(np.max(np.linalg.norm(g1 - g2, axis=1) - np.linalg.norm(X - Y, axis=1)))
    return _check("geometry", dot_res <= 1e-9 and excess <= 1e-12, dot_residual=dot_res, distance_excess=excess)


def _kernels(config):
    return [KernelSpec.maxwell(config.kernel.nu if config.kernel.power_law else 0.5),
            KernelSpec.hard_potential(0.5, 0.5), KernelSpec.hard_sphere()]


def run_invariant_suite(config, rng_seed=None):
    """Run the checks named in ``config.checks``; an empty list passes vacuously.

    Returns ``{"passed": bool, "checks": [...]}``.
    """
    seed = config.seed if rng_seed is None else rng_seed
    rng = np.random.default_rng(seed)
    n = config.samples
    K_list = (1.0, 8.0, 64.0)
    out = []
    for name in config.checks:
        if name == "geometry":
            out.append(_geometry_checks(rng, max(n, 1000)))
        elif name == "closed_pieces":
            worst = 0.0
            for spec in _kernels(config):
                q = inequalities.stress_quadruples(n, rng)
                X = q[:, 0] - q[:, 1]
                x = np.linalg.norm(X, axis=1)
                for K in K_list:
                    sq, vec = inequalities.closed_pieces(q, K, spec)
                    ph = cutoff_weight(x, K, spec)
                    ref = x ** 2 * ph
                    worst = max(worst, float(np.max(np.abs(sq - ref) / np.maximum(ref, 1e-300))))
                    vref = np.linalg.norm(X * ph[:, None], axis=1)
                    worst = max(worst, float(np.max(np.linalg.norm(vec + X * ph[:, None], axis=1)
                                                    / np.maximum(vref, 1e-300))))
            out.append(_check("closed_pieces", worst <= 1e-8, worst_relative_error=worst))
        elif name == "coupled_bound":
            for spec in _kernels(config):
                rep = inequalities.check_fundest(n, K_list, spec, seed=int(rng.integers(2 ** 31)))
                out.append(_check(f"coupled_bound[{spec.label()}]", rep.passed, report=rep.to_dict()))
        elif name == "maxwell_terms":
            spec = KernelSpec.maxwell(config.kernel.nu if config.kernel.power_law else 0.5)
            q = inequalities.stress_quadruples(n, rng)
            a1_max = a2_err = anti = 0.0
            for K in K_list:
                A1, A2, _ = inequalities.a_terms(q, K, spec)
                swapped = q[:, [1, 0, 3, 2]]
                _, A2s, _ = inequalities.a_terms(swapped, K, spec)
                a1_max = max(a1_max, float(np.max(np.abs(A1))))
                a2_err = max(a2_err, float(np.max(np.abs(A2 - inequalities.maxwell_a2(q, K, spec)))))
                anti = max(anti, float(np.max(np.abs(A2 + A2s))))
            ok = a1_max == 0.0 and a2_err <= 1e-9 and anti <= 1e-10
            out.append(_check("maxwell_terms", ok, A1_max=a1_max, A2_error=a2_err, antisymmetry=anti))
        elif name == "tail_bound":
            for spec in _kernels(config):
                rep = inequalities.check_A3_bounds(n, spec, K_list, seed=int(rng.integers(2 ** 31)))
                out.append(_check(f"tail_bound[{spec.label()}]", rep.passed, report=rep.to_dict()))
        elif name == "g_gap":
            grid = np.logspace(-2, 2, 7)
            for spec in _kernels(config)[1:]:
                res = inequalities.check_G_squared_diff(grid, grid, spec)
                out.append(_check(f"g_gap[{spec.label()}]", res["finite"], **res))
        elif name == "phi_regularity":
            for spec in _kernels(config):
                res = inequalities.check_phiK_regularity(K_list, spec)
                bound = inequalities.phi_limit_constant(spec)
                finite = all(math.isfinite(v) for r in res.values() for v in r.values())
                ok = finite and all(r["value_ratio"] <= bound * (1 + 1e-9) for r in res.values())
                out.append(_check(f"phi_regularity[{spec.label()}]", ok,
                                  ratios={str(k): v for k, v in res.items()}, limit=bound))
        elif name == "simulator":
            out.append(_simulator_check(config, seed))
    return {"passed": all(c["passed"] for c in out), "checks": out}


def _simulator_check(config, seed):
    # one-sidedness and mean energy on a small system
    cfg = sim.SimConfig(N=16, K_levels=(4.0,), kernel=config.kernel, horizon=1.0, seed=seed,
                        snapshot_times=(0.0, 0.5, 1.0), batch_size=1)
    state = sim.sample_initial(16, cfg.initial, seed)
    rng = sim.rng_stream(seed, 0, sim.STREAM_EVENTS)
    one_sided = True
    for _ in range(200):
        ev = sim.next_event(state, cfg, rng)
        new = sim.apply_event(state, ev, 4.0, cfg.kernel)
        changed = np.any(new.velocities != state.velocities, axis=1)
        one_sided &= bool(changed.sum() <= 1 and (not changed.any() or changed[ev.i]))
        state = new
    runs = sim.run_replicas(replace(cfg, batch_size=4096), 200)
    energy = np.array([[np.mean(np.sum(v ** 2, axis=-1)) for v in tr.velocities[:, 0]] for tr in runs])
    se = energy.std(axis=0, ddof=1) / math.sqrt(energy.shape[0])
    drift = np.abs(energy.mean(axis=0) - energy.mean(axis=0)[0])
    ok_energy = bool(np.all(drift[1:] <= 4.0 * np.hypot(se[1:], se[0])))
    return _check("simulator", one_sided and ok_energy, one_sided=one_sided,
                  energy_drift=drift.tolist(), energy_se=se.tolist())


# ---------------------------------------------------------------- output


def version_string():
    """``git describe`` of the source tree when available, else the package version."""
    from . import __version__

    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+g{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(rows):
        w.writerow([r.statistic, r.N, repr(r.K), repr(r.t), repr(r.value), repr(r.stderr), r.replicas, r.seed])
    return buf.getvalue()


def emit_report(rows, out_dir, config=None, info=None, name="scan"):
    """Write ``<name>.csv`` (rows sorted by statistic, N, K, t) and ``<name>.manifest.json``."""
    if not rows:
        raise ValueError("emit_report needs at least one row")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{name}.csv"
    csv_path.write_text(rows_to_csv(rows))
    manifest = {
        "version": version_string(),
        "config": config.describe() if config is not None else None,
        "rows": len(rows),
        "info": info or {},
    }
    man_path = out / f"{name}.manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return csv_path, man_path
