"""Reproducible experiment harness for the safe-tuning benchmark.

Configures problems (vehicle simulator or synthetic with known ground truth),
runs seeded replicate studies across algorithm variants and stepping modes,
records per-iteration rows with true-constraint violation flags, and persists
frozen-schema CSV/JSON outputs. Replicates are fully independent: each one
derives its own RNG streams from (seed, replicate), so results are
byte-stable for a given seed regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import json
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import SafeOptMc
from .engine import (
    EmptySafeSetError,
    EngineOptions,
    GpSpec,
    Mclosbo,
    NoCandidatesError,
    SafetyConfig,
)
from .gp import GammaPrior, GammaPriorConfig, KernelConfig, NoiseConfig
from .grid import DomainGrid
from .synthetic import synthetic_problem
from .vehicle import VehicleTuningProblem

__all__ = [
    "FunctionConfig",
    "ExperimentConfig",
    "StudyConfig",
    "RunResult",
    "VARIANTS",
    "variant_config",
    "run_experiment",
    "run_replicates",
    "run_study",
    "load_experiment_config",
    "load_study_config",
]

MAX_Q = 3

RUNS_COLUMNS = (
    ["variant", "algorithm", "mode", "hyperopt", "dimension", "replicate", "iteration", "grid_index"]
    + [f"theta_{i}" for i in range(3)]
    + ["y_objective"]
    + [f"y_g{i}" for i in range(1, MAX_Q + 1)]
    + [f"g{i}_true" for i in range(1, MAX_Q + 1)]
    + ["violation", "safe_size"]
    + [f"safe_min_{i}" for i in range(3)]
    + [f"safe_max_{i}" for i in range(3)]
    + ["pending_at_proposal"]
)

SUMMARY_COLUMNS = [
    "variant",
    "algorithm",
    "mode",
    "hyperopt",
    "dimension",
    "replicate",
    "seed",
    "status",
    "iterations_completed",
    "initial_objective",
    "best_objective",
    "total_violations",
    "wall_time_s",
]

QUANTILE_COLUMNS = ["variant", "dimension", "count", "q0", "q25", "q50", "q75", "q100"]

# The five benchmark variants of the simulation study.
VARIANTS = {
    "mclosbo-sync": ("mclosbo", "sync", False),
    "mclosbo-sync-hyperopt": ("mclosbo", "sync", True),
    "mclosbo-async": ("mclosbo", "async", False),
    "mclosbo-async-hyperopt": ("mclosbo", "async", True),
    "safeopt-mc": ("safeopt-mc", "sync", False),
}

# Standard-setup kernel/noise table for the simulator (objective, g1, g2).
SIM_FUNCTION_DEFAULTS = (
    dict(lengthscale=0.2, sigma_f=1.0, sigma_d=0.03, noise_bound=0.03),
    dict(lengthscale=0.2, sigma_f=1.0, sigma_d=0.1, noise_bound=0.1),
    dict(lengthscale=0.2, sigma_f=0.2, sigma_d=0.01, noise_bound=0.1),
)

GAMMA_PRIORS = GammaPriorConfig(
    lengthscale=GammaPrior(shape=3.0, rate=10.0), outputscale=GammaPrior(shape=3.0, rate=2.0)
)


@dataclass(frozen=True)
class FunctionConfig:
    """Per-function GP hyperparameters plus safety constants.

    ``sigma_f`` is the signal standard deviation (the kernel stores its
    square). ``lipschitz`` stays ``None`` for the objective.
    """

    lengthscale: float = 0.2
    sigma_f: float = 1.0
    sigma_d: float = 0.1
    noise_bound: float = 0.1
    lipschitz: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment cell: algorithm x mode x problem, with replicates."""

    algorithm: str = "mclosbo"
    mode: str = "sync"
    hyperopt: bool = False
    dimension: int = 1
    iterations: int = 30
    replicates: int = 1
    seed: int = 0
    problem: str = "sim"
    constraints: int = 2
    grid_resolution: int | None = None
    beta: float = 2.0
    hyperopt_period: int = 1
    fit_restarts: int = 5
    pending_capacity: int = 1
    expander_literal: bool = False
    expander_forall: bool = False
    rescale_objective: bool = True
    problem_seed: int | None = None
    tied_objective: bool = False
    lengthscale_scale: float = 1.0
    outputscale_scale: float = 1.0
    functions: tuple[FunctionConfig, ...] | None = None
    label: str = ""

    def __post_init__(self):
        if self.algorithm not in ("mclosbo", "safeopt-mc"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in ("sync", "async"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.problem not in ("sim", "synthetic"):
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2, or 3")
        if self.iterations < 1 or self.replicates < 1:
            raise ValueError("iterations and replicates must be >= 1")
        if self.problem == "sim" and self.constraints != 2:
            raise ValueError("the simulator problem has exactly 2 constraints")
        if not 1 <= self.constraints <= MAX_Q:
            raise ValueError(f"constraint count must be in 1..{MAX_Q}")

    @property
    def variant(self) -> str:
        if self.label:
            return self.label
        name = f"{self.algorithm}-{self.mode}"
        if self.hyperopt:
            name += "-hyperopt"
        return name


@dataclass(frozen=True)
class StudyConfig:
    """A family of experiment cells sharing one problem definition."""

    name: str = "study"
    variants: tuple[str, ...] = tuple(VARIANTS)
    dimensions: tuple[int, ...] = (1, 2, 3)
    iterations: int = 30
    replicates: int = 30
    seed: int = 0
    problem: str = "sim"
    constraints: int = 2
    grid_resolution: int | None = None

    def experiment_configs(self) -> list[ExperimentConfig]:
        configs = []
        for dim in self.dimensions:
            for variant in self.variants:
                configs.append(
                    variant_config(
                        variant,
                        dimension=dim,
                        iterations=self.iterations,
                        replicates=self.replicates,
                        seed=self.seed,
                        problem=self.problem,
                        constraints=self.constraints,
                        grid_resolution=self.grid_resolution,
                    )
                )
        return configs


def variant_config(variant: str, **kwargs) -> ExperimentConfig:
    """ExperimentConfig for one named benchmark variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; known: {sorted(VARIANTS)}")
    algorithm, mode, hyperopt = VARIANTS[variant]
    return ExperimentConfig(algorithm=algorithm, mode=mode, hyperopt=hyperopt, label=variant, **kwargs)


@dataclass
class RunResult:
    """Per-iteration rows plus the run summary for one replicate."""

    config: ExperimentConfig
    replicate: int
    rows: list[dict]
    summary: dict


_SIM_PROBLEM_CACHE: dict = {}


def build_problem(cfg: ExperimentConfig):
    if cfg.problem == "sim":
        key = (cfg.dimension, cfg.grid_resolution)
        problem = _SIM_PROBLEM_CACHE.get(key)
        if problem is None:
            grid = (
                DomainGrid.regular(cfg.dimension, cfg.grid_resolution)
                if cfg.grid_resolution
                else DomainGrid.regular(cfg.dimension)
            )
            problem = VehicleTuningProblem(cfg.dimension, grid=grid)
            _SIM_PROBLEM_CACHE[key] = problem
        return problem
    seed = cfg.seed if cfg.problem_seed is None else cfg.problem_seed
    grid = (
        DomainGrid.regular(cfg.dimension, cfg.grid_resolution)
        if cfg.grid_resolution
        else DomainGrid.regular(cfg.dimension)
    )
    return synthetic_problem(seed, d=cfg.dimension, q=cfg.constraints, grid=grid, tied=cfg.tied_objective)


def _function_configs(cfg: ExperimentConfig, problem) -> list[FunctionConfig]:
    if cfg.functions is not None:
        if len(cfg.functions) != problem.q + 1:
            raise ValueError("need one function config for the objective plus one per constraint")
        return list(cfg.functions)
    if cfg.problem == "sim":
        out = []
        for i, d in enumerate(SIM_FUNCTION_DEFAULTS):
            lip = None if i == 0 else float(problem.lipschitz[i - 1])
            if cfg.algorithm == "safeopt-mc":
                # The baseline's safety rests on calibrated confidence bounds;
                # "well specified" means its likelihood noise matches the
                # uniform sampler's actual std, not the standard table value.
                d = dict(d, sigma_d=d["noise_bound"] / np.sqrt(3.0))
            out.append(FunctionConfig(lipschitz=lip, **d))
        return out
    # synthetic: noise bounds and Lipschitz constants come from the problem
    out = [
        FunctionConfig(
            lengthscale=0.2,
            sigma_f=1.0,
            sigma_d=float(problem.noise_bound[0]) / np.sqrt(3.0),
            noise_bound=float(problem.noise_bound[0]),
        )
    ]
    for i in range(problem.q):
        out.append(
            FunctionConfig(
                lengthscale=0.2,
                sigma_f=1.0,
                sigma_d=float(problem.noise_bound[1 + i]) / np.sqrt(3.0),
                noise_bound=float(problem.noise_bound[1 + i]),
                lipschitz=float(problem.lipschitz[i]),
            )
        )
    return out


def build_engine(cfg: ExperimentConfig, problem, engine_seed: int):
    functions = _function_configs(cfg, problem)
    specs = []
    for fc in functions:
        kernel = KernelConfig.isotropic(
            fc.lengthscale * cfg.lengthscale_scale,
            (fc.sigma_f**2) * cfg.outputscale_scale**2,
            problem.grid.dim,
        )
        specs.append(
            GpSpec(
                kernel=kernel,
                noise=NoiseConfig(fc.sigma_d),
                priors=GAMMA_PRIORS if cfg.hyperopt else None,
            )
        )
    safety = SafetyConfig(
        lipschitz=tuple(fc.lipschitz for fc in functions[1:]),
        noise_bound=tuple(fc.noise_bound for fc in functions[1:]),
    )
    options = EngineOptions(
        expander_strict=not cfg.expander_literal,
        expander_any_constraint=not cfg.expander_forall,
        rescale_objective=cfg.rescale_objective,
        hyperopt=cfg.hyperopt,
        hyperopt_period=cfg.hyperopt_period,
        fit_restarts=cfg.fit_restarts,
        pending_capacity=cfg.pending_capacity,
    )
    cls = Mclosbo if cfg.algorithm == "mclosbo" else SafeOptMc
    return cls(
        grid=problem.grid,
        safety=safety,
        functions=specs,
        initial_safe=[problem.theta0_index],
        beta=cfg.beta,
        options=options,
        seed=engine_seed,
    )


def run_experiment(cfg: ExperimentConfig, replicate: int = 0) -> RunResult:
    """Execute one seeded replicate; deterministic given (cfg.seed, replicate)."""
    t_begin = time.perf_counter()
    seed_seq = np.random.SeedSequence(entropy=(cfg.seed, replicate))
    noise_seed, engine_seed = seed_seq.spawn(2)
    rng = np.random.default_rng(noise_seed)
    problem = build_problem(cfg)
    engine = build_engine(cfg, problem, engine_seed=int(engine_seed.generate_state(1)[0]))
    grid = problem.grid

    rows: list[dict] = []
    open_records: list = []
    row_of_record: dict[int, int] = {}
    status = "ok"

    def record_row(iteration: int, idx: int, y0: float, ys, pending_count: int, state) -> None:
        theta = grid.points[idx]
        g_true = problem.true_constraints(theta)
        safe_pts = grid.points[state.safe]
        row = {
            "variant": cfg.variant,
            "algorithm": cfg.algorithm,
            "mode": cfg.mode,
            "hyperopt": int(cfg.hyperopt),
            "dimension": cfg.dimension,
            "replicate": replicate,
            "iteration": iteration,
            "grid_index": idx,
            "y_objective": y0,
            "violation": int(bool(np.any(g_true < 0.0))),
            "safe_size": int(state.safe.sum()),
            "pending_at_proposal": pending_count,
        }
        for i in range(3):
            row[f"theta_{i}"] = theta[i] if i < grid.dim else ""
            row[f"safe_min_{i}"] = float(safe_pts[:, i].min()) if i < grid.dim else ""
            row[f"safe_max_{i}"] = float(safe_pts[:, i].max()) if i < grid.dim else ""
        for i in range(1, MAX_Q + 1):
            row[f"y_g{i}"] = ys[i - 1] if i - 1 < len(ys) else ""
            row[f"g{i}_true"] = g_true[i - 1] if i - 1 < len(g_true) else ""
        rows.append(row)

    try:
        for iteration in range(1, cfg.iterations + 1):
            idx = engine.propose()
            state = engine.last_state
            pending_count = len(engine.pending())
            synchronous = (
                cfg.mode == "sync"
                or len(engine.bootstrap_remaining()) > 0
                or len(engine.completed()) == 0
            )
            if synchronous:
                y0, ys = problem.measure(grid.points[idx], rng)
                engine.observe(idx, y0, ys)
                record_row(iteration, idx, y0, ys, pending_count, state)
            else:
                rec = engine.begin_pending(idx)
                record_row(iteration, idx, np.nan, [], pending_count, state)
                row_of_record[rec.record_id] = len(rows) - 1
                open_records.append(rec)
                while len(open_records) > cfg.pending_capacity:
                    done = open_records.pop(0)
                    y0, ys = problem.measure(done.theta, rng)
                    engine.complete_pending(done, y0, ys)
                    _fill_measurement(rows[row_of_record[done.record_id]], y0, ys)
        for done in open_records:
            y0, ys = problem.measure(done.theta, rng)
            engine.complete_pending(done, y0, ys)
            _fill_measurement(rows[row_of_record[done.record_id]], y0, ys)
        open_records = []
    except (EmptySafeSetError, NoCandidatesError):
        status = "dead_end"
        for done in open_records:
            y0, ys = problem.measure(done.theta, rng)
            engine.complete_pending(done, y0, ys)
            _fill_measurement(rows[row_of_record[done.record_id]], y0, ys)

    measured = [r for r in rows if not np.isnan(r["y_objective"])]
    best = max((r["y_objective"] for r in measured), default=float("nan"))
    initial = measured[0]["y_objective"] if measured else float("nan")
    summary = {
        "variant": cfg.variant,
        "algorithm": cfg.algorithm,
        "mode": cfg.mode,
        "hyperopt": int(cfg.hyperopt),
        "dimension": cfg.dimension,
        "replicate": replicate,
        "seed": cfg.seed,
        "status": status,
        "iterations_completed": len(rows),
        "initial_objective": initial,
        "best_objective": best,
        "total_violations": int(sum(r["violation"] for r in rows)),
        "wall_time_s": time.perf_counter() - t_begin,
    }
    return RunResult(config=cfg, replicate=replicate, rows=rows, summary=summary)


def _fill_measurement(row: dict, y0: float, ys) -> None:
    row["y_objective"] = y0
    for i in range(1, MAX_Q + 1):
        if i - 1 < len(ys):
            row[f"y_g{i}"] = ys[i - 1]


def _run_cell(args) -> RunResult:
    cfg, replicate = args
    return run_experiment(cfg, replicate)


def run_replicates(cfg: ExperimentConfig, workers: int = 1) -> list[RunResult]:
    """All replicates of one cell, sorted by replicate index."""
    tasks = [(cfg, r) for r in range(cfg.replicates)]
    if workers <= 1:
        results = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    return sorted(results, key=lambda r: r.replicate)


def run_study(configs: list[ExperimentConfig], workers: int = 1) -> list[RunResult]:
    """Every (config, replicate) cell, in a stable (config order, replicate) order."""
    tasks = [(i, cfg, r) for i, cfg in enumerate(configs) for r in range(cfg.replicates)]
    if workers <= 1:
        done = [(i, r, _run_cell((cfg, r))) for i, cfg, r in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_cell, [(cfg, r) for _, cfg, r in tasks])
            done = [(i, r, res) for (i, _, r), res in zip(tasks, results)]
    done.sort(key=lambda t: (t[0], t[1]))
    return [res for _, _, res in done]


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        if value != value:  # NaN
            return "nan"
        return f"{value:.17g}"
    return str(value)


def write_runs_csv(results: list[RunResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(RUNS_COLUMNS) + "\n")
        for result in results:
            for row in result.rows:
                fh.write(",".join(_fmt(row[c]) for c in RUNS_COLUMNS) + "\n")


def write_summary_csv(results: list[RunResult], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SUMMARY_COLUMNS) + "\n")
        for result in results:
            fh.write(",".join(_fmt(result.summary[c]) for c in SUMMARY_COLUMNS) + "\n")


def write_quantiles_csv(results: list[RunResult], path) -> None:
    cells: dict[tuple[str, int], list[float]] = {}
    for result in results:
        key = (result.summary["variant"], result.summary["dimension"])
        value = result.summary["best_objective"]
        if value == value:
            cells.setdefault(key, []).append(value)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(QUANTILE_COLUMNS) + "\n")
        for (variant, dim), values in sorted(cells.items()):
            qs = np.percentile(values, [0, 25, 50, 75, 100])
            fields = [variant, str(dim), str(len(values))] + [_fmt(float(q)) for q in qs]
            fh.write(",".join(fields) + "\n")


def _git_hash() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            cwd=Path(__file__).parent,
            timeout=5,
        )
        return out.stdout.strip() if out.returncode == 0 else "unknown"
    except OSError:
        return "unknown"


def write_meta_json(configs: list[ExperimentConfig], results: list[RunResult], path, workers: int) -> None:
    doc = {
        "package_version": __version__,
        "git_hash": _git_hash(),
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "workers": workers,
        "configs": [dataclasses.asdict(cfg) for cfg in configs],
        "total_runs": len(results),
        "total_violations": int(sum(r.summary["total_violations"] for r in results)),
        "total_wall_time_s": float(sum(r.summary["wall_time_s"] for r in results)),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_outputs(configs, results, out_dir, workers: int = 1) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "runs": out_dir / "runs.csv",
        "summary": out_dir / "summary.csv",
        "quantiles": out_dir / "quantiles.csv",
        "meta": out_dir / "meta.json",
    }
    write_runs_csv(results, paths["runs"])
    write_summary_csv(results, paths["summary"])
    write_quantiles_csv(results, paths["quantiles"])
    write_meta_json(configs, results, paths["meta"], workers)
    return paths


# ---------------------------------------------------------------------------
# config files (TOML)
# ---------------------------------------------------------------------------

def _load_toml(path) -> dict:
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_experiment_config(path) -> ExperimentConfig:
    """Single-experiment TOML: an [experiment] table plus optional [function.*]."""
    doc = _load_toml(path)
    exp = dict(doc.get("experiment", {}))
    functions = None
    if "function" in doc:
        names = ["objective"] + [f"g{i}" for i in range(1, MAX_Q + 1)]
        entries = []
        for name in names:
            if name in doc["function"]:
                entries.append(FunctionConfig(**doc["function"][name]))
        functions = tuple(entries)
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(exp) - known
    if unknown:
        raise ValueError(f"unknown experiment config keys: {sorted(unknown)}")
    if functions:
        exp["functions"] = functions
    return ExperimentConfig(**exp)


def load_study_config(path) -> StudyConfig:
    doc = _load_toml(path)
    study = dict(doc.get("study", {}))
    for key in ("variants", "dimensions"):
        if key in study:
            study[key] = tuple(study[key])
    known = {f.name for f in dataclasses.fields(StudyConfig)}
    unknown = set(study) - known
    if unknown:
        raise ValueError(f"unknown study config keys: {sorted(unknown)}")
    return StudyConfig(**study)


def env_workers(default: int = 1) -> int:
    return int(os.environ.get("SAFEBO_WORKERS", default))


def env_out_dir(default: str) -> str:
    return os.environ.get("SAFEBO_OUT_DIR", default)
