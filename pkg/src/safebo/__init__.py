"""Safe Bayesian optimization with Lipschitz-only safety guarantees.

The package bundles the multi-constraint Lipschitz-only safe optimizer
(MCLoSBO), a reconstructed SafeOpt-MC baseline, exact GP regression with
Matern-5/2 kernels and MAP hyperparameter fitting, a deterministic vehicle
trajectory-tracking simulator as the benchmark problem, and a reproducible
experiment harness with a small CLI (``safebo run|study|lipschitz|export-trace``).
"""

from .baseline import SafeOptMc, baseline_safe_set
from .engine import (
    EmptySafeSetError,
    EngineOptions,
    GpSpec,
    Mclosbo,
    NoCandidatesError,
    ObservationRecord,
    SafeState,
    SafetyConfig,
    acquisition_width,
    compute_safe_set,
    confidence_bounds,
    expander_set,
    insert_virtual_point,
    losbo,
    maximizer_set,
    select_next,
)
from .gp import (
    ConditioningError,
    FitResult,
    GammaPrior,
    GammaPriorConfig,
    GpModel,
    KernelConfig,
    MinMaxTransform,
    NoiseConfig,
    fit_hyperparameters,
    kernel_eval,
    minmax_rescale,
)
from .grid import DomainGrid
from .synthetic import SyntheticProblem, synthetic_problem
from .vehicle import (
    ControllerParams,
    SimTrace,
    Track,
    TrackConfig,
    VehicleConfig,
    VehicleState,
    VehicleTuningProblem,
    build_track,
    controller_steering,
    default_track,
    estimate_lipschitz,
    evaluate_constraints,
    evaluate_objective,
    simulate_lap,
)

__version__ = "0.1.0"
