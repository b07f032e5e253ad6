"""Exception hierarchy for cpelt.

Every library-specific failure derives from :class:`CpeltError` so callers
can catch one base class; precondition violations additionally derive from
``ValueError`` and solver breakdowns from ``RuntimeError``.
"""


class CpeltError(Exception):
    """Base class for all cpelt errors."""


class ParameterDomainError(CpeltError, ValueError):
    """Parameter vector lies outside the model's box domain."""


class NumericEvaluationError(CpeltError, ArithmeticError):
    """Model evaluation produced a non-finite value."""


class SolverFailureError(CpeltError, RuntimeError):
    """Damped normal equations stayed singular at every damping level."""


class PlanTooWideError(CpeltError, ValueError):
    """Trimming plan gives u(n) <= e, where the asymptotic critical-value
    formula is undefined."""


class DegenerateVarianceError(CpeltError, ValueError):
    """Estimated error variance is numerically zero; the scan statistic
    is undefined for perfectly interpolating data."""


class SingularMatrixError(CpeltError, RuntimeError):
    """Gradient second-moment matrix stayed singular after ridge repair."""


class NoSolutionError(CpeltError, RuntimeError):
    """Empirical-likelihood equations have no solution with positive
    weights (zero outside the convex hull of the score rows)."""


class NonConvergenceError(CpeltError, RuntimeError):
    """Iterative solver exhausted its iteration budget."""


class BaselineUnavailableError(CpeltError, RuntimeError):
    """Every split fit of the sup-F baseline failed to converge."""


class CalibrationFailureError(CpeltError, RuntimeError):
    """Too many bootstrap replicates failed during threshold calibration."""


class ExperimentFailureError(CpeltError, RuntimeError):
    """More than half of the Monte-Carlo replications failed."""


class CsvFormatError(CpeltError, ValueError):
    """Malformed CSV input (bad header, bad cell, or non-finite value)."""
