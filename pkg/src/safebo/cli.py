"""Command-line interface: run experiments, studies, estimates, trace exports.

Subcommands
-----------
run          one experiment config (TOML), all replicates, CSV outputs
study        a study config (TOML): variants x dimensions, CSV outputs
lipschitz    finite-difference Lipschitz estimate for a problem's constraints
export-trace simulate one lap at given gains and write the trace CSV

Environment overrides: ``SAFEBO_OUT_DIR`` (default output directory) and
``SAFEBO_WORKERS`` (default worker count).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .grid import DomainGrid
from .harness import load_experiment_config, load_study_config, run_study, write_outputs
from .synthetic import synthetic_problem
from .vehicle import (
    ControllerParams,
    VehicleConfig,
    VehicleTuningProblem,
    estimate_lipschitz,
    simulate_lap,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", default=None, help="output directory (default: ./safebo-out)")
    parser.add_argument("--workers", type=int, default=None, help="parallel replicate workers")


def _resolve_out_workers(args) -> tuple[Path, int]:
    out = Path(harness.env_out_dir(args.out if args.out else "safebo-out"))
    workers = args.workers if args.workers is not None else harness.env_workers(1)
    return out, workers


def cmd_run(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.seed is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, seed=args.seed)
    out, workers = _resolve_out_workers(args)
    results = run_study([cfg], workers=workers)
    paths = write_outputs([cfg], results, out, workers)
    violations = sum(r.summary["total_violations"] for r in results)
    print(f"{len(results)} runs, {violations} true-constraint violations")
    print(f"wrote {paths['runs']}, {paths['summary']}, {paths['quantiles']}, {paths['meta']}")
    return 0


def cmd_study(args) -> int:
    study = load_study_config(args.config)
    configs = study.experiment_configs()
    out, workers = _resolve_out_workers(args)
    results = run_study(configs, workers=workers)
    paths = write_outputs(configs, results, out, workers)
    violations = sum(r.summary["total_violations"] for r in results)
    print(f"study {study.name}: {len(results)} runs, {violations} true-constraint violations")
    print(f"wrote {paths['runs']}, {paths['summary']}, {paths['quantiles']}, {paths['meta']}")
    return 0


def cmd_lipschitz(args) -> int:
    if args.problem == "sim":
        problem = VehicleTuningProblem(args.dim)
        grid = DomainGrid.regular(args.dim, args.resolution) if args.resolution else problem.grid
        names = ["g1 (cross-track)", "g2 (yaw rate)"]

        def fn_of(i):
            def fn(points):
                return np.array(
                    [problem.true_constraints(p)[i] for p in np.atleast_2d(points)]
                )

            return fn

        fns = [fn_of(i) for i in range(2)]
    else:
        problem = synthetic_problem(args.seed, d=args.dim, q=args.constraints)
        grid = DomainGrid.regular(args.dim, args.resolution) if args.resolution else problem.grid
        names = [f"g{i+1}" for i in range(problem.q)]
        fns = [lambda pts, g=g: g(np.atleast_2d(pts)) for g in problem.constraints]

    for name, fn in zip(names, fns):
        est = estimate_lipschitz(fn, grid, factor=args.factor)
        print(f"{name}: {est:.6g}  (grid {grid.resolutions}, factor {args.factor})")
    return 0


def cmd_export_trace(args) -> int:
    gains = [float(v) for v in args.params.split(",")]
    if len(gains) != 3:
        raise SystemExit("--params expects three comma-separated gains: k_ct,k_ca,k_d")
    if args.normalized:
        params = ControllerParams.from_normalized(np.asarray(gains), VehicleConfig())
    else:
        params = ControllerParams(*gains)
    trace = simulate_lap(params, disturbance=args.disturbance)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out)
    print(f"wrote {out} ({trace.n} samples, diverged={trace.diverged})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safebo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    _add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_study = sub.add_parser("study", help="run a study config")
    p_study.add_argument("--config", required=True)
    _add_common(p_study)
    p_study.set_defaults(func=cmd_study)

    p_lip = sub.add_parser("lipschitz", help="estimate constraint Lipschitz constants")
    p_lip.add_argument("--problem", choices=["sim", "synthetic"], default="sim")
    p_lip.add_argument("--dim", type=int, required=True, choices=[1, 2, 3])
    p_lip.add_argument("--resolution", type=int, default=None)
    p_lip.add_argument("--factor", type=float, default=1.5)
    p_lip.add_argument("--seed", type=int, default=0, help="synthetic problem seed")
    p_lip.add_argument("--constraints", type=int, default=2, help="synthetic constraint count")
    p_lip.set_defaults(func=cmd_lipschitz)

    p_trace = sub.add_parser("export-trace", help="simulate one lap and write the trace CSV")
    p_trace.add_argument("--params", required=True, help="k_ct,k_ca,k_d (physical units)")
    p_trace.add_argument("--normalized", action="store_true", help="params are in [0,1]")
    p_trace.add_argument("--disturbance", type=float, default=1.0)
    p_trace.add_argument("--out", default="trace.csv")
    p_trace.set_defaults(func=cmd_export_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
