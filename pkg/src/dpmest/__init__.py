"""Differentially private robust M-estimation, testing, and simulation."""

from .data import Dataset, ScenarioSpec, generate_scenario, load_csv, save_csv
from .errors import (
    ConvergenceError,
    DegenerateScaleError,
    DPMestError,
    OracleBudgetError,
    ParseError,
    RegularityError,
    SensitivityUndefinedError,
    SeparationError,
    UnboundedSensitivityError,
    UnsupportedDimensionError,
    ValidationError,
)
from .estimators import (
    FitResult,
    HuberLocationScale,
    MallowsRegressor,
    PsiConfig,
    RestrictedSpec,
    RobustLogisticRegressor,
    TruncatedScoreMLE,
    fisher_kappa,
    fit_location_scale,
    fit_mallows,
    fit_restricted,
    fit_robust_logistic,
    fit_truncated_mle,
    huber_psi,
    huber_rho,
)
from .inference import (
    TestResult,
    dp_confidence_interval,
    dp_test,
    level_functional,
    lr_statistic,
    score_statistic,
    wald_statistic,
)
from .privacy import (
    BudgetLedger,
    DPRelease,
    PrivacyParams,
    mechanism_scale,
    release_estimate,
    release_pvalue,
)
from .sensitivity import (
    SensitivityReport,
    empirical_influence,
    ges_location_scale,
    ges_logistic_bound,
    ges_regression_bound,
    influence_matrix,
    level_ges_quadratic,
    level_ges_wald,
    theorem_min_n,
)
from .simulate import run_estimation, run_level_sweep, run_power_sweep

__version__ = "0.1.0"
