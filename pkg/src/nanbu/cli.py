"""Command-line front end.

Exit codes: 0 success, 1 a verification check failed, 2 usage or
configuration error, 3 numerical failure.
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import harness, sim, transport
from .errors import CapacityError, ConfigError, InputError, QuadratureError

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides the configuration)")
    p.add_argument("--out", type=Path, help="output directory (overrides the configuration)")
    p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")


def build_parser():
    parser = _Parser(prog="nanbu", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("simulate", help="run one trajectory and dump snapshots")
    _common(p)
    p.add_argument("--replica", type=int, default=0)
    p = sub.add_parser("n-scan", help="W2 distance to a reference cloud for each N")
    _common(p)
    p = sub.add_parser("k-scan", help="coupled-cutoff gaps for each K")
    _common(p)
    p = sub.add_parser("verify", help="run the invariant suite")
    _common(p)
    p = sub.add_parser("w2", help="W2^2 between two vx,vy,vz CSV clouds")
    _common(p)
    p.add_argument("a", type=Path)
    p.add_argument("b", type=Path)
    p = sub.add_parser("epsilon-n", help="Monte Carlo W2^2 between N draws and the initial law")
    _common(p)
    return parser


def _config(args):
    cfg = harness.load_config(args.config) if args.config else harness.ScanConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = str(args.out)
    if args.threads is not None:
        changes["threads"] = args.threads
    return replace(cfg, **changes) if changes else cfg


def _simulate(cfg, args):
    sc = sim.SimConfig(
        N=cfg.N_list[0],
        K_levels=cfg.K_list,
        kernel=cfg.kernel,
        horizon=cfg.horizon,
        seed=cfg.seed,
        initial=cfg.initial,
        snapshot_times=cfg.snapshot_times,
        align=cfg.align,
    )
    start = time.perf_counter()
    traj = sim.run(sc, args.replica)
    wall = time.perf_counter() - start
    manifest = sim.write_trajectory(cfg.out_dir, sc, traj, wall_time=wall)
    print(f"wrote {len(traj.times)} snapshot(s), {manifest['event_count']} events, to {cfg.out_dir}")
    return EXIT_OK


def _scan(kind, cfg):
    if kind == "n-scan":
        rows, info = harness.run_n_scan(cfg)
        info["fit"] = harness.fit_rows(rows, "w2sq_to_ref", "N")
    elif kind == "k-scan":
        rows, info = harness.run_k_scan(cfg)
        info["fit"] = harness.fit_rows(rows, "coupled_gap", "K")
    else:
        rows, info = harness.run_epsilon_scan(cfg)
        info["fit"] = harness.fit_rows(rows, "epsilonN", "N")
    csv_path, _ = harness.emit_report(rows, cfg.out_dir, cfg, info, name=kind.replace("-", "_"))
    print(f"wrote {len(rows)} rows to {csv_path}")
    if info.get("reliable") is False:
        print("warning: reference clouds disagree by more than a quarter of the smallest statistic")
    return EXIT_OK


def _verify(cfg):
    report = harness.run_invariant_suite(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "verify_report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}")
    if not report["passed"]:
        print(f"verification failed; report at {path}")
        return EXIT_VIOLATION
    return EXIT_OK


def _w2(args):
    a = sim.read_velocities(args.a)
    b = sim.read_velocities(args.b)
    res = transport.w2_exact(a, b) if a.shape == b.shape else transport.w2_unequal(a, b)
    print(repr(res.cost))
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "w2.json").write_text(
            json.dumps({"w2_squared": res.cost, "n": len(a), "m": len(b)}, indent=2) + "\n"
        )
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "w2":
            return _w2(args)
        cfg = _config(args)
        if args.command == "simulate":
            return _simulate(cfg, args)
        if args.command == "verify":
            return _verify(cfg)
        return _scan(args.command, cfg)
    except (ConfigError, InputError, CapacityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
