"""Safe Bayesian optimization on a finite grid with Lipschitz-only safety.

The optimizer certifies safety purely from measurements: every completed
observation anchors, per constraint, a Lipschitz cone of points whose
constraint value is provably nonnegative under the known Lipschitz constants
and hard noise bounds. GP confidence intervals never enter the safety
argument; they only steer exploration (expanders) and exploitation
(maximizers), so the safety guarantee is independent of kernel
hyperparameters and of the confidence factor beta.

Synchronous stepping measures each proposal before the next one; asynchronous
stepping keeps proposals pending and stands in virtual data points (pending
point conditioned at its posterior mean) until the measurement arrives.
Pending points never contribute to the safe set.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .gp import (
    GammaPrior,
    GammaPriorConfig,
    GpModel,
    KernelConfig,
    NoiseConfig,
    fit_hyperparameters,
    minmax_rescale,
)
from .grid import DomainGrid

__all__ = [
    "SafetyConfig",
    "GpSpec",
    "ObservationRecord",
    "SafeState",
    "EngineOptions",
    "EmptySafeSetError",
    "NoCandidatesError",
    "compute_safe_set",
    "confidence_bounds",
    "maximizer_set",
    "expander_set",
    "acquisition_width",
    "select_next",
    "insert_virtual_point",
    "Mclosbo",
    "losbo",
]


class EmptySafeSetError(RuntimeError):
    """The safe set is empty; optimization cannot proceed."""


class NoCandidatesError(RuntimeError):
    """Maximizer and expander sets are both empty."""


@dataclass(frozen=True)
class SafetyConfig:
    """Per-constraint Lipschitz constants and hard noise bounds.

    Lipschitz constants are in constraint units per normalized-domain unit
    (Euclidean); noise bounds are in constraint units.
    """

    lipschitz: tuple[float, ...]
    noise_bound: tuple[float, ...]

    def __post_init__(self):
        if len(self.lipschitz) != len(self.noise_bound):
            raise ValueError("lipschitz and noise_bound must have equal length")
        if any(l <= 0 for l in self.lipschitz):
            raise ValueError("Lipschitz constants must be positive")
        if any(e < 0 for e in self.noise_bound):
            raise ValueError("noise bounds must be nonnegative")

    @property
    def q(self) -> int:
        return len(self.lipschitz)


@dataclass(frozen=True)
class GpSpec:
    """GP configuration for one scalar function (objective or constraint)."""

    kernel: KernelConfig
    noise: NoiseConfig
    priors: GammaPriorConfig | None = None


@dataclass
class ObservationRecord:
    """One experiment: the queried point and, once measured, its outcomes.

    Pending records (asynchronous mode) carry no measurement values;
    completed records carry the objective and all constraint values.
    """

    theta: np.ndarray
    grid_index: int
    record_id: int
    proposed_at: int
    objective: float | None = None
    constraints: np.ndarray | None = None
    pending: bool = False
    completed_at: int | None = None

    def complete(self, objective: float, constraints, at_iteration: int) -> None:
        constraints = np.asarray(constraints, dtype=float).reshape(-1)
        if not np.isfinite(objective) or not np.all(np.isfinite(constraints)):
            raise ValueError("measurements must be finite")
        self.objective = float(objective)
        self.constraints = constraints
        self.pending = False
        self.completed_at = at_iteration


@dataclass
class SafeState:
    """Grid masks and bounds from one proposal step."""

    safe: np.ndarray
    maximizers: np.ndarray
    expanders: np.ndarray
    lower: np.ndarray  # (q+1, N); row 0 = objective
    upper: np.ndarray
    expander_counts: np.ndarray
    beta: float


@dataclass(frozen=True)
class EngineOptions:
    """Behavioral switches; defaults follow the package's standard setup."""

    expander_strict: bool = True  # require e_n > 0 (literal rule admits every safe point)
    expander_any_constraint: bool = True  # exists-i certification; False = all-i ablation
    rescale_objective: bool = True
    hyperopt: bool = False
    hyperopt_period: int = 1
    fit_restarts: int = 5
    fit_max_iter: int = 100
    pending_capacity: int = 1


def compute_safe_set(
    completed_observations,
    cfg: SafetyConfig,
    grid: DomainGrid,
    initial_safe,
) -> np.ndarray:
    """Lipschitz-only safe set as a boolean grid mask.

    A point is safe when it lies in the initial safe set or when some single
    completed measurement certifies it for every constraint simultaneously:
    ``y_i - E_i - L_i * dist >= 0`` for all i. The union runs over all
    completed measurements, so the safe set only ever grows.
    """
    initial_safe = list(initial_safe)
    if len(initial_safe) == 0:
        raise ValueError("initial safe set must be non-empty")
    mask = np.zeros(grid.size, dtype=bool)
    mask[np.asarray(initial_safe, dtype=int)] = True
    lip = np.asarray(cfg.lipschitz)
    bound = np.asarray(cfg.noise_bound)
    for rec in completed_observations:
        if rec.pending:
            raise ValueError("pending observations cannot certify safety")
        grid.index_of(rec.theta)  # raises for off-grid observations
        values = np.asarray(rec.constraints, dtype=float)
        if values.shape[0] != cfg.q:
            raise ValueError("observation constraint count does not match config")
        dist = grid.distances_from(rec.theta)
        cone = np.ones(grid.size, dtype=bool)
        for i in range(cfg.q):
            cone &= values[i] - bound[i] - lip[i] * dist >= 0.0
            if not cone.any():
                break
        mask |= cone
    return mask


def confidence_bounds(
    gp_models, beta: float, grid: DomainGrid
) -> tuple[np.ndarray, np.ndarray]:
    """Per-function lower/upper bounds mu -+ beta*sigma over the grid."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    lower = np.empty((len(gp_models), grid.size))
    upper = np.empty_like(lower)
    for i, model in enumerate(gp_models):
        mean, var = model.posterior(grid.points)
        sd = np.sqrt(var)
        lower[i] = mean - beta * sd
        upper[i] = mean + beta * sd
    return lower, upper


def maximizer_set(safe_mask: np.ndarray, lower0: np.ndarray, upper0: np.ndarray) -> np.ndarray:
    """Safe points whose objective upper bound reaches the best safe lower bound."""
    if not safe_mask.any():
        raise EmptySafeSetError("cannot compute maximizers of an empty safe set")
    best_lower = np.max(lower0[safe_mask])
    mask = np.zeros_like(safe_mask)
    mask[safe_mask] = upper0[safe_mask] >= best_lower
    return mask


def expander_set(
    safe_mask: np.ndarray,
    upper_constraints: np.ndarray,
    cfg: SafetyConfig,
    grid: DomainGrid,
    strict: bool = True,
    any_constraint: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Expander mask and per-point counts of optimistically certifiable points.

    For each safe point, counts the unsafe grid points that an optimistic
    measurement (the upper confidence bound) would certify through the
    Lipschitz cone of at least one constraint (``any_constraint``) or of every
    constraint (ablation). ``strict`` demands a positive count; the literal
    nonnegative rule admits every safe point.
    """
    if not safe_mask.any():
        raise EmptySafeSetError("cannot compute expanders of an empty safe set")
    counts = np.zeros(grid.size, dtype=np.int64)
    safe_idx = np.flatnonzero(safe_mask)
    unsafe_idx = np.flatnonzero(~safe_mask)
    lip = np.asarray(cfg.lipschitz)
    if unsafe_idx.size > 0:
        chunk = max(1, 2_000_000 // unsafe_idx.size)
        for start in range(0, safe_idx.size, chunk):
            sel = safe_idx[start : start + chunk]
            dist = grid.cross_distances(sel, unsafe_idx)
            certified = None
            for i in range(cfg.q):
                ok = upper_constraints[i, sel][:, None] - lip[i] * dist >= 0.0
                if certified is None:
                    certified = ok
                elif any_constraint:
                    certified |= ok
                else:
                    certified &= ok
            counts[sel] = np.sum(certified, axis=1)
    mask = safe_mask.copy()
    if strict:
        mask &= counts > 0
    return mask, counts


def acquisition_width(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Confidence-interval width, the acquisition value per point and function."""
    return upper - lower


def select_next(candidate_mask: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> int:
    """Grid index with the greatest width over all functions among candidates.

    Ties break to the lowest flat grid index for reproducibility.
    """
    candidates = np.flatnonzero(candidate_mask)
    if candidates.size == 0:
        raise NoCandidatesError("maximizer and expander sets are both empty")
    widths = np.max(upper[:, candidates] - lower[:, candidates], axis=0)
    return int(candidates[int(np.argmax(widths))])


def insert_virtual_point(gp_models, point: np.ndarray) -> list[GpModel]:
    """Condition each GP on (point, its current posterior mean at point).

    The virtual observation leaves the mean field at the point unchanged up to
    noise-variance shrinkage while collapsing the variance there, which
    discounts the neighborhood of a pending query in the acquisition. Virtual
    points are ephemeral: they exist only in the returned models and never
    reach the safe-set computation.
    """
    out = []
    for model in gp_models:
        mean, _ = model.posterior_at(point)
        out.append(model.update(point, mean))
    return out


class _EngineBase:
    """Shared bookkeeping for grid-based safe BO variants.

    Subclasses supply the safe-set rule via :meth:`_safe_mask`. One instance
    drives one optimization run single-threaded; independent instances may run
    in parallel.
    """

    algorithm = "base"

    def __init__(
        self,
        grid: DomainGrid,
        safety: SafetyConfig,
        functions: list[GpSpec],
        initial_safe,
        beta: float = 2.0,
        options: EngineOptions | None = None,
        seed: int = 0,
    ):
        if len(functions) != safety.q + 1:
            raise ValueError("need one GpSpec for the objective plus one per constraint")
        if beta <= 0:
            raise ValueError("beta must be positive")
        self.grid = grid
        self.safety = safety
        self.specs = list(functions)
        self.kernels = [f.kernel for f in functions]
        self.beta = float(beta)
        self.options = options or EngineOptions()
        self.initial_safe = tuple(int(i) for i in initial_safe)
        if len(self.initial_safe) == 0:
            raise ValueError("initial safe set must be non-empty")
        for i in self.initial_safe:
            if not 0 <= i < grid.size:
                raise ValueError("initial safe index out of range")
        self.rng = np.random.default_rng(seed)
        self._seed = seed
        self.observations: list[ObservationRecord] = []
        self.iteration = 0
        self._opt_steps = 0
        self._next_record_id = 0
        self.last_state: SafeState | None = None
        self.audit_log: list[dict] = []

    # -- observation bookkeeping ------------------------------------------

    @property
    def q(self) -> int:
        return self.safety.q

    def completed(self) -> list[ObservationRecord]:
        return [r for r in self.observations if not r.pending]

    def pending(self) -> list[ObservationRecord]:
        return [r for r in self.observations if r.pending]

    def bootstrap_remaining(self) -> list[int]:
        """Initial safe indices that still need their founding measurement."""
        touched = {r.grid_index for r in self.observations}
        return [i for i in self.initial_safe if i not in touched]

    def _new_record(self, index: int, pending: bool) -> ObservationRecord:
        rec = ObservationRecord(
            theta=self.grid.points[index].copy(),
            grid_index=int(index),
            record_id=self._next_record_id,
            proposed_at=self.iteration,
            pending=pending,
        )
        self._next_record_id += 1
        self.observations.append(rec)
        return rec

    def observe(self, index: int, objective: float, constraints) -> ObservationRecord:
        """Record a completed (synchronous) measurement at a grid index."""
        rec = self._new_record(index, pending=False)
        rec.complete(objective, constraints, at_iteration=self.iteration)
        return rec

    def begin_pending(self, index: int) -> ObservationRecord:
        """Register an asynchronous query whose measurement will arrive later."""
        if len(self.pending()) >= max(1, self.options.pending_capacity) + 1:
            raise RuntimeError("pending capacity exceeded")
        return self._new_record(index, pending=True)

    def complete_pending(self, record: ObservationRecord, objective: float, constraints) -> None:
        if not record.pending:
            raise ValueError("record is not pending")
        record.complete(objective, constraints, at_iteration=self.iteration)

    # -- model construction ------------------------------------------------

    def _build_models(self, completed, pending, allow_fit: bool) -> list[GpModel]:
        thetas = (
            np.array([r.theta for r in completed])
            if completed
            else np.empty((0, self.grid.dim))
        )
        columns = []
        y0 = np.array([r.objective for r in completed], dtype=float)
        if self.options.rescale_objective and len(completed) > 0:
            scaled, _ = minmax_rescale(y0)
            columns.append(scaled)
        else:
            columns.append(y0)
        for i in range(self.q):
            columns.append(np.array([r.constraints[i] for r in completed], dtype=float))

        if (
            allow_fit
            and self.options.hyperopt
            and len(completed) >= 2
            and self._opt_steps % max(1, self.options.hyperopt_period) == 0
        ):
            for i, spec in enumerate(self.specs):
                model = GpModel(self.kernels[i], spec.noise, thetas, columns[i], priors=spec.priors)
                result = fit_hyperparameters(
                    model,
                    rng=self.rng,
                    restarts=self.options.fit_restarts,
                    max_iter=self.options.fit_max_iter,
                )
                self.kernels[i] = result.kernel

        models = [
            GpModel(self.kernels[i], spec.noise, thetas, columns[i], priors=spec.priors)
            for i, spec in enumerate(self.specs)
        ]
        for rec in pending:
            models = insert_virtual_point(models, rec.theta)
        return models

    # -- stepping ------------------------------------------------------------

    def _safe_mask(self, completed, lower, upper) -> np.ndarray:
        raise NotImplementedError

    def propose(self) -> int:
        """One selection step: safe set, maximizers, expanders, argmax width.

        During bootstrap the unmeasured initial safe points are returned first
        (their founding measurements anchor the first Lipschitz cones). The
        caller then either measures the point synchronously (:meth:`observe`)
        or registers it as pending (:meth:`begin_pending`).
        """
        self.iteration += 1
        bootstrap = self.bootstrap_remaining()
        is_bootstrap = len(bootstrap) > 0
        completed = self.completed()
        pending = self.pending()
        models = self._build_models(completed, pending, allow_fit=not is_bootstrap)
        lower, upper = confidence_bounds(models, self.beta, self.grid)
        safe = self._safe_mask(completed, lower, upper)
        maximizers = maximizer_set(safe, lower[0], upper[0])
        expanders, counts = expander_set(
            safe,
            upper[1:],
            self.safety,
            self.grid,
            strict=self.options.expander_strict,
            any_constraint=self.options.expander_any_constraint,
        )
        self.last_state = SafeState(
            safe=safe,
            maximizers=maximizers,
            expanders=expanders,
            lower=lower,
            upper=upper,
            expander_counts=counts,
            beta=self.beta,
        )
        self.audit_log.append(
            {
                "iteration": self.iteration,
                "completed_ids": tuple(r.record_id for r in completed),
                "pending_ids": tuple(r.record_id for r in pending),
                "safe_mask": safe.copy(),
            }
        )
        if is_bootstrap:
            return bootstrap[0]
        self._opt_steps += 1
        return select_next(maximizers | expanders, lower, upper)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        """Checkpoint as a JSON-ready document (schema in the README)."""
        def kernel_doc(k: KernelConfig) -> dict:
            return {"lengthscales": list(k.lengthscales), "outputscale": k.outputscale}

        def spec_doc(spec: GpSpec) -> dict:
            doc = {
                "kernel": kernel_doc(spec.kernel),
                "noise_std": spec.noise.noise_std,
                "priors": None,
            }
            if spec.priors is not None:
                doc["priors"] = {
                    "lengthscale": asdict(spec.priors.lengthscale),
                    "outputscale": asdict(spec.priors.outputscale),
                }
            return doc

        return {
            "format": "safebo-engine-v1",
            "algorithm": self.algorithm,
            "grid": {"resolutions": list(self.grid.resolutions)},
            "safety": {
                "lipschitz": list(self.safety.lipschitz),
                "noise_bound": list(self.safety.noise_bound),
            },
            "beta": self.beta,
            "seed": self._seed,
            "options": asdict(self.options),
            "functions": [spec_doc(s) for s in self.specs],
            "current_kernels": [kernel_doc(k) for k in self.kernels],
            "initial_safe": list(self.initial_safe),
            "iteration": self.iteration,
            "opt_steps": self._opt_steps,
            "next_record_id": self._next_record_id,
            "rng_state": self.rng.bit_generator.state,
            "observations": [
                {
                    "theta": list(r.theta),
                    "grid_index": r.grid_index,
                    "record_id": r.record_id,
                    "proposed_at": r.proposed_at,
                    "objective": r.objective,
                    "constraints": None if r.constraints is None else list(r.constraints),
                    "pending": r.pending,
                    "completed_at": r.completed_at,
                }
                for r in self.observations
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "_EngineBase":
        if doc.get("format") != "safebo-engine-v1":
            raise ValueError("unrecognized checkpoint format")

        def kernel_from(d: dict) -> KernelConfig:
            return KernelConfig(lengthscales=tuple(d["lengthscales"]), outputscale=d["outputscale"])

        def spec_from(d: dict) -> GpSpec:
            priors = None
            if d["priors"] is not None:
                priors = GammaPriorConfig(
                    lengthscale=GammaPrior(**d["priors"]["lengthscale"]),
                    outputscale=GammaPrior(**d["priors"]["outputscale"]),
                )
            return GpSpec(kernel=kernel_from(d["kernel"]), noise=NoiseConfig(d["noise_std"]), priors=priors)

        engine = cls(
            grid=DomainGrid(tuple(doc["grid"]["resolutions"])),
            safety=SafetyConfig(
                lipschitz=tuple(doc["safety"]["lipschitz"]),
                noise_bound=tuple(doc["safety"]["noise_bound"]),
            ),
            functions=[spec_from(d) for d in doc["functions"]],
            initial_safe=doc["initial_safe"],
            beta=doc["beta"],
            options=EngineOptions(**doc["options"]),
            seed=doc["seed"],
        )
        engine.kernels = [kernel_from(d) for d in doc["current_kernels"]]
        engine.iteration = doc["iteration"]
        engine._opt_steps = doc["opt_steps"]
        engine._next_record_id = doc["next_record_id"]
        engine.rng.bit_generator.state = doc["rng_state"]
        for r in doc["observations"]:
            rec = ObservationRecord(
                theta=np.asarray(r["theta"], dtype=float),
                grid_index=r["grid_index"],
                record_id=r["record_id"],
                proposed_at=r["proposed_at"],
                objective=r["objective"],
                constraints=None if r["constraints"] is None else np.asarray(r["constraints"], dtype=float),
                pending=r["pending"],
                completed_at=r["completed_at"],
            )
            engine.observations.append(rec)
        return engine

    @classmethod
    def from_json(cls, text: str) -> "_EngineBase":
        return cls.from_dict(json.loads(text))


class Mclosbo(_EngineBase):
    """Multi-constraint Lipschitz-only safe Bayesian optimizer (MCLoSBO)."""

    algorithm = "mclosbo"

    def _safe_mask(self, completed, lower, upper) -> np.ndarray:
        return compute_safe_set(completed, self.safety, self.grid, self.initial_safe)


def losbo(
    grid: DomainGrid,
    lipschitz: float,
    noise_bound: float,
    function: GpSpec,
    initial_safe,
    beta: float = 2.0,
    options: EngineOptions | None = None,
    seed: int = 0,
) -> Mclosbo:
    """Single-constraint configuration: the objective is the safety function.

    Ties the objective and the lone constraint to the same measurement stream
    (feed ``observe(idx, y, [y])``), which recovers the single-constraint
    algorithm as the q=1 special case of the multi-constraint engine.
    """
    return Mclosbo(
        grid=grid,
        safety=SafetyConfig(lipschitz=(float(lipschitz),), noise_bound=(float(noise_bound),)),
        functions=[function, function],
        initial_safe=initial_safe,
        beta=beta,
        options=options,
        seed=seed,
    )
