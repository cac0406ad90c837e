"""Robust weighted-likelihood estimation for linear panel data models.

Classical pooled, between, fixed-effects and random-effects estimators, their
outlier-resistant weighted-likelihood counterparts, and a Monte Carlo harness
for comparing them under contamination.
"""

from .classical import (
    EstimatorFit,
    estimate_variance_components,
    fit_between,
    fit_fixed_effects,
    fit_pooled_ols,
    fit_random_effects,
)
from .exceptions import (
    DomainError,
    DuplicateCellError,
    EstimationError,
    InfeasibleContaminationError,
    NoConvergedRootError,
    NonFiniteValueError,
    NoWithinVariationError,
    PanelValidationError,
    RankDeficientError,
    RankDeficientUnderWeightsError,
    RobustPanelError,
    TooFewIndividualsError,
    UnbalancedPanelError,
)
from .panel import (
    PanelDataset,
    TransformedData,
    VarianceComponents,
    between_transform,
    pooled_data,
    quasi_demean,
    read_panel_csv,
    validate_panel,
    within_transform,
    write_panel_csv,
)
from .robust import RobustFit, fit_wbe, fit_wfe, fit_wpols, fit_wre
from .simulation import (
    Contamination,
    EstimatorSummary,
    SimResult,
    SimSpec,
    contaminate,
    fit_estimator,
    format_results_text,
    generate_panel,
    parse_grid_config,
    run_simulation,
    write_results_csv,
)
from .wle import (
    WleConfig,
    WleSolution,
    derive_bandwidth_constant,
    disparity,
    irls_solve,
    kernel_density,
    pearson_residuals,
    raf,
    single_outlier_weight,
    smoothed_model_density,
    solve_wle,
    weight,
)

__version__ = "0.1.0"

__all__ = [
    "Contamination",
    "DomainError",
    "DuplicateCellError",
    "EstimationError",
    "EstimatorFit",
    "EstimatorSummary",
    "InfeasibleContaminationError",
    "NoConvergedRootError",
    "NonFiniteValueError",
    "NoWithinVariationError",
    "PanelDataset",
    "PanelValidationError",
    "RankDeficientError",
    "RankDeficientUnderWeightsError",
    "RobustFit",
    "RobustPanelError",
    "SimResult",
    "SimSpec",
    "TooFewIndividualsError",
    "TransformedData",
    "UnbalancedPanelError",
    "VarianceComponents",
    "WleConfig",
    "WleSolution",
    "between_transform",
    "contaminate",
    "derive_bandwidth_constant",
    "disparity",
    "estimate_variance_components",
    "fit_between",
    "fit_estimator",
    "fit_fixed_effects",
    "fit_pooled_ols",
    "fit_random_effects",
    "fit_wbe",
    "fit_wfe",
    "fit_wpols",
    "fit_wre",
    "format_results_text",
    "generate_panel",
    "irls_solve",
    "kernel_density",
    "parse_grid_config",
    "pearson_residuals",
    "pooled_data",
    "quasi_demean",
    "raf",
    "read_panel_csv",
    "run_simulation",
    "single_outlier_weight",
    "smoothed_model_density",
    "solve_wle",
    "validate_panel",
    "weight",
    "within_transform",
    "write_panel_csv",
    "write_results_csv",
]
