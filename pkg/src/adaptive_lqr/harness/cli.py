"""Command line entry point: ``adaptive-lqr {run,verify,geometry,decompose}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from ..errors import AdaptiveLQRError
from ..geometry import dumps, geometry_report
from ..policies import optimal_policy
from ..regret import compute_regret, decompose
from ..system import CostSpec, DynamicsParameter, Trajectory, simulate
from .config import OUTPUT_DIR_ENV, PRESETS, load_config, preset
from .run import run_experiment
from .verify import verify_suite


def load_system(source: str) -> tuple[DynamicsParameter, CostSpec]:
    """A preset name or a YAML/JSON file with ``a``, ``b`` and optional ``q``, ``r``."""
    if source in PRESETS:
        return PRESETS[source]()
    data = yaml.safe_load(Path(source).read_text())
    theta = DynamicsParameter(data["a"], data["b"])
    return theta, CostSpec(data.get("q", np.eye(theta.p)), data.get("r", np.eye(theta.r)))


def cmd_run(args) -> int:
    cfg = preset(args.preset) if args.preset else load_config(args.config)
    if args.workers:
        cfg.workers = args.workers
    if args.output_dir:
        os.environ[OUTPUT_DIR_ENV] = args.output_dir
    record = run_experiment(cfg)
    for name, path in sorted(record.files.items()):
        print(f"wrote {path}")
    for rep in record.failures:
        print(f"replicate {rep['index']} failed: {rep['error']}", file=sys.stderr)
    return 1 if len(record.failures) == len(record.replicates) else 0


def cmd_verify(args) -> int:
    report = verify_suite(args.level, inject_bug=args.inject_bug)
    print("\n".join(report.lines()))
    print("verify:", "PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_geometry(args) -> int:
    theta0, cost = load_system(args.theta0)
    text = dumps(geometry_report(theta0, cost, sample_count=args.samples, seed=args.seed))
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)
    return 0


def cmd_decompose(args) -> int:
    theta0, cost = load_system(args.system)
    traj = Trajectory.from_csv(args.trajectory, theta0)
    opt = simulate(theta0, cost, optimal_policy(theta0, cost), traj.noises, traj.states[0])
    regret = float(compute_regret(traj, opt, theta0, cost).regret[-1]) if traj.horizon else 0.0
    terms = decompose(traj, theta0, cost)
    out = {"n": terms.n, "regret": regret, "z": terms.z, "s": terms.s, "t": terms.t,
           "total": terms.total, "relative_residual": abs(regret - terms.total) / (1 + abs(regret))}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-lqr", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a YAML config")
    run.add_argument("config", nargs="?", help="experiment YAML file")
    run.add_argument("--preset", help="reference-rce, reference-ts, sparse-gce, sparse-rce or optimal")
    run.add_argument("--workers", type=int, help="parallel replicate workers")
    run.add_argument("--output-dir", help=f"output directory (also via ${OUTPUT_DIR_ENV})")
    run.set_defaults(func=cmd_run)

    ver = sub.add_parser("verify", help="run the invariant battery")
    ver.add_argument("--level", choices=("fast", "full"), default="fast")
    ver.add_argument("--inject-bug", action="store_true",
                     help="negate the quadratic decomposition term; the identity check must fail")
    ver.set_defaults(func=cmd_verify)

    geo = sub.add_parser("geometry", help="JSON report of the geometry at theta0")
    geo.add_argument("--theta0", required=True, help="system YAML/JSON file or preset name")
    geo.add_argument("--samples", type=int, default=200)
    geo.add_argument("--seed", type=int, default=0)
    geo.add_argument("--output", help="write the JSON here instead of stdout")
    geo.set_defaults(func=cmd_geometry)

    dec = sub.add_parser("decompose", help="regret decomposition of a trajectory CSV")
    dec.add_argument("--trajectory", required=True, help="CSV with t, x_i, u_i, cost columns")
    dec.add_argument("--system", default="reference", help="system YAML/JSON file or preset name")
    dec.set_defaults(func=cmd_decompose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "run" and not (args.config or args.preset):
        parser.error("run needs a config file or --preset")
    try:
        return args.func(args)
    except AdaptiveLQRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
