"""Empirical-likelihood change-point tests for nonlinear parametric regression.

The package tests a nonlinear regression for parameter changes after all
observations are collected: a single-change scan with asymptotic
extreme-value critical values, an epidemic (two-change) scan calibrated by
parametric bootstrap, a least-squares sup-F baseline, and a Monte-Carlo lab
for measuring size, power and change-point estimation quality.
"""

__version__ = "0.1.0"

from .epidemic import (
    EpidemicScanResult,
    calibrate_threshold,
    default_epidemic_trim,
    epidemic_scan,
    epidemic_statistic,
    exact_epidemic_statistic,
)
from .estimation import (
    DataSet,
    FitResult,
    ScoreVectors,
    estimate_V,
    estimate_sigma2,
    fit_nls,
    fit_nls_multistart,
    score_vectors,
)
from .estimators import (
    ELChangePointDetector,
    EpidemicChangePointDetector,
    SupFChangePointDetector,
)
from .eltest import (
    ExactELState,
    ScanResult,
    SegmentMeans,
    TrimmingPlan,
    approx_statistic,
    critical_value,
    exact_statistic,
    owen_el_logratio,
    scan,
    scan_statistics,
    segment_means,
    trimming_default,
    trimming_plan,
    u_of_n,
    u_value,
)
from .exceptions import (
    BaselineUnavailableError,
    CalibrationFailureError,
    CpeltError,
    CsvFormatError,
    DegenerateVarianceError,
    ExperimentFailureError,
    NoSolutionError,
    NonConvergenceError,
    NumericEvaluationError,
    ParameterDomainError,
    PlanTooWideError,
    SingularMatrixError,
    SolverFailureError,
)
from .lsbaseline import SUPF_CRITICAL, SupFResult, sup_f
from .model import (
    ModelSpec,
    ParamDomain,
    check_gradient,
    eval_f,
    eval_grad,
    get_model,
    linear,
    ratio_power,
)
from .simlab import (
    ErrorDistribution,
    SimConfig,
    SimReport,
    generate_epidemic,
    generate_one_change,
    run_replications,
    sample_error,
    sample_errors,
)

__all__ = [name for name in dir() if not name.startswith("_")]
