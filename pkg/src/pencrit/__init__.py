"""Penalized-contrast model selection for time series.

The criterion for a candidate subset m of parameter coordinates is the
minimized quasi-likelihood contrast plus ``kappa_n * |m|``; diverging penalty
schedules recover the true support with probability tending to one, while
bounded penalties overfit with a computable limiting probability.  The package
provides the built-in families, simulators, contrast kernels (compiled with a
pure-Python fallback), subset estimation, penalty schedules, limiting
distributions and a Monte Carlo experiment harness, plus the ``pencrit`` CLI.
"""

from ._backend import BACKEND_NAME, available_backends
from ._version import __version__
from .asymptotics import (
    JointLimit,
    joint_limit_from_population,
    joint_limit_matrices,
    overfit_probability,
)
from .contrast import (
    ContrastKind,
    ContrastValue,
    contrast,
    contrast_dispatch,
    gaussian_contrast,
    poisson_contrast,
)
from .errors import (
    ConfigError,
    DataFormatError,
    ExplosiveSimulationError,
    FitFailureError,
    PencritError,
    SingularMatrixError,
)
from .estimate import (
    FitOptions,
    FitResult,
    SandwichMatrices,
    estimate_sandwich,
    fit_mce,
    vartheta_diagnostic,
)
from .experiments import (
    ExperimentPlan,
    ExperimentReport,
    run_consistency,
    run_nonconsistency,
    run_normality,
    single_path_loglog_sweep,
)
from .families import (
    EnumerationPolicy,
    FamilyKind,
    FamilySpec,
    ModelSubset,
    default_mandatory,
    enumerate_models,
    eval_conditionals,
    project_to_subset,
    support_subset,
)
from .select import (
    PenaltyKind,
    PenaltySchedule,
    SelectionResult,
    criterion_table,
    penalty_value,
    select_model,
)
from .simulate import (
    Emission,
    Innovation,
    RngStream,
    Trajectory,
    TrajectoryKind,
    simulate_acx,
    simulate_mod,
)

__all__ = [
    "BACKEND_NAME",
    "available_backends",
    "__version__",
    "JointLimit",
    "joint_limit_from_population",
    "joint_limit_matrices",
    "overfit_probability",
    "ContrastKind",
    "ContrastValue",
    "contrast",
    "contrast_dispatch",
    "gaussian_contrast",
    "poisson_contrast",
    "ConfigError",
    "DataFormatError",
    "ExplosiveSimulationError",
    "FitFailureError",
    "PencritError",
    "SingularMatrixError",
    "FitOptions",
    "FitResult",
    "SandwichMatrices",
    "estimate_sandwich",
    "fit_mce",
    "vartheta_diagnostic",
    "ExperimentPlan",
    "ExperimentReport",
    "run_consistency",
    "run_nonconsistency",
    "run_normality",
    "single_path_loglog_sweep",
    "EnumerationPolicy",
    "FamilyKind",
    "FamilySpec",
    "ModelSubset",
    "default_mandatory",
    "enumerate_models",
    "eval_conditionals",
    "project_to_subset",
    "support_subset",
    "PenaltyKind",
    "PenaltySchedule",
    "SelectionResult",
    "criterion_table",
    "penalty_value",
    "select_model",
    "Emission",
    "Innovation",
    "RngStream",
    "Trajectory",
    "TrajectoryKind",
    "simulate_acx",
    "simulate_mod",
]
