"""Aggregated-load Gaussian-process models for substation panels.

Fits per-customer-type typical curves (and temperature-driven surfaces) to
aggregated substation loads under structured covariances, clusters
substations with a mixture model estimated by ECM, and ships a simulation
engine plus diagnostics to verify everything end to end.
"""

from .basis import (
    InterpolatingCurve,
    KnotVector,
    TensorBasisSpec,
    eval_basis,
    eval_tensor_basis,
    fit_interpolating_spline,
    make_uniform_knots,
)
from .clustering import (
    MixtureConfig,
    MixtureFitResult,
    MixtureState,
    e_step,
    fit_mixture,
    init_clusters,
    m_step_beta,
    m_step_covariance,
    m_step_pi,
)
from .covariance import (
    CovKind,
    CovMatrix,
    CovarianceParams,
    CovarianceSpec,
    correlation,
    customer_covariance,
    substation_covariance,
    variance_functional,
)
from .diagnostics import (
    ComparisonReport,
    ResidualCurves,
    beta_covariance,
    bic,
    bic_of,
    covariance_param_se,
    fitted_values,
    fmsre_fit,
    fmsre_parameter,
    likelihood_ratio_test,
    relative_residuals,
    snr_curve,
)
from .errors import (
    AggloadError,
    DegenerateClusterError,
    DomainError,
    FactorizationError,
    IdentifiabilityError,
    SchemaError,
)
from .model import (
    CurveBand,
    FitResult,
    ModelConfig,
    build_design_row,
    check_identifiability,
    fit,
    log_likelihood,
    optimize_covariance,
    typical_curve,
    wls_beta_update,
)
from .panel import LoadPanel, MarketTable
from .simulate import (
    FitPlan,
    ScenarioSpec,
    StudyReport,
    TrueParameters,
    generate_market,
    generate_panel,
    run_study,
    true_typical_surface,
)

__version__ = "0.1.0"

__all__ = [
    "AggloadError",
    "ComparisonReport",
    "CovKind",
    "CovMatrix",
    "CovarianceParams",
    "CovarianceSpec",
    "CurveBand",
    "DegenerateClusterError",
    "DomainError",
    "FactorizationError",
    "FitPlan",
    "FitResult",
    "IdentifiabilityError",
    "InterpolatingCurve",
    "KnotVector",
    "LoadPanel",
    "MarketTable",
    "MixtureConfig",
    "MixtureFitResult",
    "MixtureState",
    "ModelConfig",
    "ResidualCurves",
    "ScenarioSpec",
    "SchemaError",
    "StudyReport",
    "TensorBasisSpec",
    "TrueParameters",
    "beta_covariance",
    "bic",
    "bic_of",
    "build_design_row",
    "check_identifiability",
    "correlation",
    "covariance_param_se",
    "customer_covariance",
    "e_step",
    "eval_basis",
    "eval_tensor_basis",
    "fit",
    "fit_interpolating_spline",
    "fit_mixture",
    "fitted_values",
    "fmsre_fit",
    "fmsre_parameter",
    "generate_market",
    "generate_panel",
    "init_clusters",
    "likelihood_ratio_test",
    "log_likelihood",
    "m_step_beta",
    "m_step_covariance",
    "m_step_pi",
    "make_uniform_knots",
    "optimize_covariance",
    "relative_residuals",
    "run_study",
    "snr_curve",
    "substation_covariance",
    "true_typical_surface",
    "typical_curve",
    "variance_functional",
    "wls_beta_update",
]
