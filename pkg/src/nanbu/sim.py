"""Event-driven simulation of the cutoff Nanbu particle system.

Each event picks an ordered pair ``(i, j)`` uniformly among the ``N(N-1)``
pairs, an intensity ``z ~ U[0, K]`` and an azimuth ``phi ~ U[0, 2pi)``, and
moves particle ``i`` alone by the truncated jump ``c_K(v_i, v_j, z, phi)``.
Events arrive at the constant total rate ``2 pi K (N - 1)`` so no thinning is
needed.

Several cutoff levels can share one event stream (common random numbers):
level ``K_l`` skips the events with ``z > K_l``.  By default the lower levels
also rotate the azimuth by the offset that aligns their frame with the top
level's frame; this keeps the law of every level unchanged (a rotated uniform
angle is uniform) while making the coupled copies stay close.

Randomness comes from Philox streams keyed by ``(seed, replica, purpose)``, so
a replica's trajectory does not depend on how many threads run the others.
"""

import csv
import hashlib
import json
import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _jit
from .errors import InputError
from .geometry import truncated_jump
from .kernel import KernelSpec

STREAM_INITIAL = 0
STREAM_EVENTS = 1


# ---------------------------------------------------------------- initial laws


@dataclass(frozen=True)
class Maxwellian:
    """Centred Gaussian with covariance ``sigma**2 I``."""

    sigma: float = 1.0

    def sample(self, n, rng):
        return self.sigma * rng.standard_normal((n, 3))

    def describe(self):
        return f"maxwellian:{self.sigma!r}"


@dataclass(frozen=True)
class UniformBall:
    """Uniform law on the ball of the given radius."""

    radius: float = 1.0

    def sample(self, n, rng):
        g = rng.standard_normal((n, 3))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / 3.0)
        return g * r[:, None]

    def describe(self):
        return f"uniform_ball:{self.radius!r}"


@dataclass(frozen=True)
class TwoPoint:
    """``+atom`` with probability ``weight`` and ``-atom`` otherwise."""

    atom: tuple = (1.0, 0.0, 0.0)
    weight: float = 0.5

    def sample(self, n, rng):
        sign = np.where(rng.random(n) < self.weight, 1.0, -1.0)
        return sign[:, None] * np.asarray(self.atom, dtype=float)[None, :]

    def describe(self):
        return "two_point:" + ",".join(repr(float(a)) for a in self.atom) + f";{self.weight!r}"


@dataclass(frozen=True)
class PointMass:
    """Every particle at the same velocity."""

    velocity: tuple = (0.0, 0.0, 0.0)

    def sample(self, n, rng):
        return np.tile(np.asarray(self.velocity, dtype=float), (n, 1))

    def describe(self):
        return "point_mass:" + ",".join(repr(float(a)) for a in self.velocity)


@dataclass(frozen=True)
class FromFile:
    """I.i.d. draws from the empirical law of the rows of a CSV file.

    The file holds ``vx,vy,vz`` rows, optionally under a header line.
    """

    path: str

    def rows(self):
        try:
            data = read_velocities(self.path)
        except OSError as exc:
            raise InputError(f"cannot read initial velocities from {self.path}: {exc}") from exc
        if data.shape[0] == 0:
            raise InputError(f"{self.path} contains no velocities")
        return data

    def sample(self, n, rng):
        data = self.rows()
        return data[rng.integers(0, data.shape[0], n)]

    def describe(self):
        return f"file:{self.path}"


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def parse_law(text):
    """Build an initial law from ``name:args``, the inverse of ``describe()``."""
    name, _, arg = text.strip().partition(":")
    try:
        if name == "maxwellian":
            return Maxwellian(float(arg) if arg else 1.0)
        if name == "uniform_ball":
            return UniformBall(float(arg) if arg else 1.0)
        if name == "two_point":
            atom, _, w = arg.partition(";")
            return TwoPoint(_floats(atom) if atom else (1.0, 0.0, 0.0), float(w) if w else 0.5)
        if name == "point_mass":
            return PointMass(_floats(arg))
    except ValueError as exc:
        raise InputError(f"malformed initial law {text!r}") from exc
    if name == "file":
        return FromFile(arg)
    raise InputError(f"unknown initial law {text!r}")


def read_velocities(path):
    """Read ``vx,vy,vz`` rows (header optional) into an ``(n, 3)`` array."""
    rows = []
    with open(path, newline="") as fh:
        for k, rec in enumerate(csv.reader(fh)):
            if not rec:
                continue
            try:
                vals = [float(x) for x in rec[-3:]]
            except ValueError:
                if k == 0:
                    continue
                raise InputError(f"{path}: line {k + 1} is not numeric")
            if len(vals) != 3:
                raise InputError(f"{path}: line {k + 1} needs three components")
            rows.append(vals)
    return np.asarray(rows, dtype=float).reshape(-1, 3)


# ---------------------------------------------------------------- state & config


@dataclass
class ParticleState:
    velocities: np.ndarray
    time: float = 0.0
    events_applied: int = 0

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        if self.velocities.ndim != 2 or self.velocities.shape[1] != 3:
            raise ValueError("velocities must have shape (N, 3)")
        if self.velocities.shape[0] < 2:
            raise ValueError("a particle system needs N >= 2")

    @property
    def N(self):
        return self.velocities.shape[0]

    def copy(self):
        return ParticleState(self.velocities.copy(), self.time, self.events_applied)


class CollisionEvent(NamedTuple):
    t: float
    i: int
    j: int
    z: float
    phi: float


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulation.

    ``K_levels`` are the cutoffs simulated together; the largest one drives the
    event stream.  ``snapshot_times`` defaults to the horizon alone.
    """

    N: int
    K_levels: tuple
    kernel: KernelSpec
    horizon: float
    seed: int = 0
    initial: object = field(default_factory=Maxwellian)
    snapshot_times: tuple = None
    align: str = "tanaka"
    batch_size: int = 65536

    def __post_init__(self):
        levels = tuple(sorted(float(k) for k in np.atleast_1d(self.K_levels)))
        object.__setattr__(self, "K_levels", levels)
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if not levels or levels[0] < 1.0:
            raise ValueError("every cutoff level must satisfy K >= 1")
        if not self.horizon >= 0.0:
            raise ValueError("the horizon must be nonnegative")
        snaps = (self.horizon,) if self.snapshot_times is None else self.snapshot_times
        snaps = tuple(sorted(float(s) for s in snaps))
        if snaps and (snaps[0] < 0.0 or snaps[-1] > self.horizon):
            raise ValueError("snapshot times must lie in [0, horizon]")
        object.__setattr__(self, "snapshot_times", snaps)
        if self.align not in ("tanaka", "none"):
            raise ValueError("align must be 'tanaka' or 'none'")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")

    @property
    def K_max(self):
        return self.K_levels[-1]

    def describe(self):
        return {
            "N": int(self.N),
            "K_levels": list(self.K_levels),
            "kernel": self.kernel.label(),
            "horizon": float(self.horizon),
            "seed": int(self.seed),
            "initial": self.initial.describe(),
            "snapshot_times": list(self.snapshot_times),
            "align": self.align,
            "batch_size": int(self.batch_size),
        }

    def digest(self):
        text = json.dumps(self.describe(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def event_rate(N, K):
    """Total jump rate ``2 pi K (N - 1)`` of the cutoff system."""
    return 2.0 * math.pi * K * (N - 1)


def rng_stream(seed, replica, purpose):
    """Independent Philox generator for one (replica, purpose) pair."""
    ss = np.random.SeedSequence(seed, spawn_key=(replica, purpose))
    return np.random.Generator(np.random.Philox(ss))


def sample_initial(N, law, seed, replica=0):
    """I.i.d. initial velocities, reproducible from ``(seed, replica)``."""
    rng = rng_stream(seed, replica, STREAM_INITIAL)
    return ParticleState(law.sample(N, rng))


def _draw_events(rng, N, K_max, size):
    # fixed draw order; next_event uses the same order with size 1
    gaps = rng.standard_exponential(size) / event_rate(N, K_max)
    i = rng.integers(0, N, size)
    j = (i + 1 + rng.integers(0, N - 1, size)) % N
    z = K_max * rng.random(size)
    phi = 2.0 * math.pi * rng.random(size)
    return gaps, i, j, z, phi


def next_event(state, config, rng):
    """Draw the next event after ``state.time`` for the top cutoff level."""
    gaps, i, j, z, phi = _draw_events(rng, state.N, config.K_max, 1)
    return CollisionEvent(state.time + gaps[0], int(i[0]), int(j[0]), float(z[0]), float(phi[0]))


def apply_event(state, event, K, spec):
    """Return the state after the event: only particle ``event.i`` moves."""
    out = state.copy()
    v = state.velocities
    c = truncated_jump(v[event.i], v[event.j], event.z, event.phi, K, spec)
    out.velocities[event.i] = v[event.i] + c
    out.time = event.t
    if event.z <= K:
        out.events_applied += 1
    return out


# ---------------------------------------------------------------- trajectories


@dataclass
class Trajectory:
    """Snapshots of one replica at one or more coupled cutoff levels.

    ``velocities[s, l]`` is the cloud of level ``levels[l]`` at ``times[s]``;
    ``events[s]`` counts the events generated up to that time and
    ``events_applied[s, l]`` those used by each level.
    """

    levels: tuple
    times: np.ndarray
    velocities: np.ndarray
    events: np.ndarray
    events_applied: np.ndarray
    replica: int = 0

    def state(self, snapshot=-1, level=-1):
        return ParticleState(
            self.velocities[snapshot, level].copy(),
            float(self.times[snapshot]),
            int(self.events_applied[snapshot, level]),
        )

    def states(self, level=-1):
        return [self.state(s, level) for s in range(len(self.times))]

    @property
    def final(self):
        return self.state()


def _family_code(spec):
    return _jit.FAMILY_POWER_LAW if spec.power_law else _jit.FAMILY_HARD_SPHERE


def _simulate(config, replica, levels):
    N = config.N
    K_max = config.K_max
    spec = config.kernel
    v0 = sample_initial(N, config.initial, config.seed, replica).velocities
    rng = rng_stream(config.seed, replica, STREAM_EVENTS)
    L = len(levels)
    V = np.ascontiguousarray(np.repeat(v0[None], L, axis=0))
    levels_arr = np.asarray(levels, dtype=float)
    snaps = config.snapshot_times
    S = len(snaps)
    out_v = np.empty((S, L, N, 3))
    out_events = np.zeros(S, dtype=np.int64)
    out_applied = np.zeros((S, L), dtype=np.int64)
    applied = np.zeros(L, dtype=np.int64)
    family = _family_code(spec)
    align = config.align == "tanaka"
    args = (levels_arr, float(spec.gamma), float(spec.nu), family, align)

    t = 0.0
    generated = 0
    k = 0
    while True:
        gaps, i, j, z, phi = _draw_events(rng, N, K_max, config.batch_size)
        times = np.cumsum(np.concatenate(([t], gaps)))[1:]
        stop = int(np.searchsorted(times, config.horizon, side="right"))
        pos = 0
        while k < S:
            cut = int(np.searchsorted(times[:stop], snaps[k], side="right"))
            if cut == stop and stop == len(times):
                break  # the snapshot lies beyond this batch
            _jit.apply_events(V, applied, i[pos:cut], j[pos:cut], z[pos:cut], phi[pos:cut], *args)
            generated += cut - pos
            pos = cut
            out_v[k] = V
            out_events[k] = generated
            out_applied[k] = applied
            k += 1
        _jit.apply_events(V, applied, i[pos:stop], j[pos:stop], z[pos:stop], phi[pos:stop], *args)
        generated += stop - pos
        if stop < len(times):
            break
        t = times[-1]
    return Trajectory(tuple(levels), np.asarray(snaps), out_v, out_events, out_applied, replica)


def run(config, replica=0):
    """Simulate the top cutoff level alone and return its snapshots."""
    return _simulate(config, replica, (config.K_max,))


def run_coupled_cutoffs(config, replica=0):
    """Simulate every level of ``config.K_levels`` on one shared event stream."""
    return _simulate(config, replica, config.K_levels)


def run_replicas(config, replicas, threads=1, coupled=False):
    """Run replicas ``0 .. replicas-1``; the result order never depends on ``threads``."""
    fn = run_coupled_cutoffs if coupled else run
    ids = range(replicas) if isinstance(replicas, int) else replicas
    if threads <= 1:
        return [fn(config, r) for r in ids]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: fn(config, r), ids))


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class Diagnostics:
    moment1: float
    moment2: float
    moment4: float
    exp_moment: float
    exp_overflow: bool
    exp_power: float
    max_speed: float


def diagnostics(state, exp_power=1.0):
    """Empirical moments ``<|v|^p>`` (p = 1, 2, 4), ``<exp(|v|^q)>`` and the top speed.

    An overflowing exponential moment is reported as ``inf`` with
    ``exp_overflow`` set.
    """
    v = state.velocities if isinstance(state, ParticleState) else np.asarray(state, dtype=float)
    speed = np.linalg.norm(v, axis=-1)
    sq = speed ** 2
    with np.errstate(over="ignore"):
        e = float(np.mean(np.exp(speed ** exp_power)))
    overflow = not math.isfinite(e)
    return Diagnostics(
        moment1=float(speed.mean()),
        moment2=float(sq.mean()),
        moment4=float((sq * sq).mean()),
        exp_moment=math.inf if overflow else e,
        exp_overflow=overflow,
        exp_power=float(exp_power),
        max_speed=float(speed.max()),
    )


# ---------------------------------------------------------------- output


def write_velocities(path, velocities):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["particle", "vx", "vy", "vz"])
        for k, v in enumerate(np.asarray(velocities, dtype=float)):
            w.writerow([k, repr(float(v[0])), repr(float(v[1])), repr(float(v[2]))])


def write_trajectory(out_dir, config, trajectory, wall_time=None, level=-1):
    """One ``snapshot_XXXX.csv`` per snapshot time plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for s, t in enumerate(trajectory.times):
        name = f"snapshot_{s:04d}.csv"
        write_velocities(out / name, trajectory.velocities[s, level])
        files.append({"file": name, "t": float(t)})
    manifest = {
        "seed": int(config.seed),
        "replica": int(trajectory.replica),
        "config": config.describe(),
        "config_hash": config.digest(),
        "level": float(trajectory.levels[level]),
        "event_count": int(trajectory.events[-1]) if len(trajectory.events) else 0,
        "events_applied": int(trajectory.events_applied[-1, level]) if len(trajectory.events) else 0,
        "snapshots": files,
        "wall_time": wall_time,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def timed_run(config, replica=0):
    """``run`` together with its wall-clock duration in seconds."""
    start = _time.perf_counter()
    traj = run(config, replica)
    return traj, _time.perf_counter() - start
