"""No-change nonlinear least-squares fit and plug-in quantities.

The fit is a Levenberg-Marquardt loop with adaptive damping and steps
projected onto the parameter box; from the fitted parameter the module
derives the plug-in error variance, the gradient second-moment matrix and
the per-observation score vectors (with prefix sums) that every scan
statistic in this package consumes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import SolverFailureError
from .model import ModelSpec, f_values, grad_values

__all__ = [
    "DataSet",
    "FitResult",
    "ScoreVectors",
    "fit_nls",
    "fit_nls_multistart",
    "grid_inits",
    "estimate_sigma2",
    "estimate_V",
    "score_vectors",
]

DAMPING_MAX = 1e12


@dataclass(frozen=True)
class DataSet:
    """Covariate rows and responses; immutable after construction."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValueError("x must be a 2-d array of shape (n, p)")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("y must be 1-d with one response per covariate row")
        if x.shape[0] < 2:
            raise ValueError("need at least 2 observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("data must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class FitResult:
    """Outcome of the no-change least-squares fit."""

    beta_hat: np.ndarray
    sigma2_hat: float
    v_hat: np.ndarray
    residuals: np.ndarray
    converged: bool
    iterations: int
    final_sse: float


@dataclass(frozen=True)
class ScoreVectors:
    """Score rows ``g_i = grad_f(x_i) * (y_i - f(x_i))`` plus prefix sums.

    ``prefix[k]`` is the sum of the first ``k`` rows, so segment sums come
    out of a single subtraction.
    """

    g: np.ndarray
    prefix: np.ndarray

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def d(self) -> int:
        return self.g.shape[1]

    def segment_sum(self, lo: int, hi: int) -> np.ndarray:
        """Sum of rows lo..hi-1 (0-based, half-open)."""
        return self.prefix[hi] - self.prefix[lo]


def _check_fit_inputs(data: DataSet, model: ModelSpec, init) -> np.ndarray:
    if data.p != model.dim_x:
        raise ValueError(
            f"data has p={data.p} covariates but model expects {model.dim_x}"
        )
    d = model.dim_beta
    if data.n < 2 * (d + 1):
        raise ValueError(f"need n >= 2(d+1) = {2 * (d + 1)} observations, got {data.n}")
    if init is None:
        return model.domain.center()
    init = np.asarray(init, dtype=float)
    if init.shape != (d,):
        raise ValueError(f"init must have shape ({d},)")
    if not model.domain.contains(init):
        raise ValueError("init must lie inside the parameter domain")
    return init


def fit_nls(
    data: DataSet,
    model: ModelSpec,
    init=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    damping: float = 1e-3,
) -> FitResult:
    """Levenberg-Marquardt least squares on the box domain.

    Damping starts at ``damping``, is multiplied by 10 whenever a step fails
    to reduce the sum of squares and divided by 10 on acceptance; candidate
    steps are projected onto the box.  The solve of the damped normal
    equations uses a Cholesky factorization; a singular system escalates the
    damping before anything is declared failed.

    Returns a :class:`FitResult` with ``converged=False`` (rather than
    raising) when the iteration budget runs out, so callers decide what a
    non-converged fit means for them.

    Raises
    ------
    SolverFailureError
        If the damped normal matrix stays singular at every damping level.
    """
    beta = model.domain.clip(_check_fit_inputs(data, model, init))
    x, y = data.x, data.y
    d = model.dim_beta
    eye = np.eye(d)

    resid = y - f_values(model, x, beta)
    sse = float(resid @ resid)
    lam = float(damping)
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        grad_rows = grad_values(model, x, beta)
        grad = grad_rows.T @ resid  # = sum of score rows; zero at a stationary point
        if np.abs(grad).max() <= tol * max(1.0, sse):
            converged = True
            break
        normal = grad_rows.T @ grad_rows

        accepted = False
        factored_once = False
        while lam <= DAMPING_MAX:
            try:
                factor = cho_factor(normal + lam * eye, lower=True)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            factored_once = True
            step = cho_solve(factor, grad)
            candidate = model.domain.clip(beta + step)
            resid_new = y - f_values(model, x, candidate)
            sse_new = float(resid_new @ resid_new)
            if sse_new <= sse:
                step_norm = float(np.linalg.norm(candidate - beta))
                beta, resid, sse = candidate, resid_new, sse_new
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                if step_norm <= tol * (1.0 + float(np.linalg.norm(beta))):
                    converged = True
                break
            lam *= 10.0

        if not accepted:
            if not factored_once:
                raise SolverFailureError(
                    "normal equations singular at every damping level"
                )
            # No improving step exists at any damping level: we are at a
            # numerical stationary point; the flag stays as the last
            # gradient test left it.
            break
        if converged:
            break

    g_rows = grad_values(model, x, beta)
    v_hat = (g_rows.T @ g_rows) / data.n
    v_hat = 0.5 * (v_hat + v_hat.T)
    return FitResult(
        beta_hat=beta,
        sigma2_hat=float(resid @ resid) / data.n,
        v_hat=v_hat,
        residuals=resid,
        converged=converged,
        iterations=iterations,
        final_sse=sse,
    )


def grid_inits(model: ModelSpec, per_dim: int = 3) -> list[np.ndarray]:
    """Interior grid of starting points (quantiles 1/4, 1/2, 3/4 per axis)."""
    lo, hi = model.domain.lower, model.domain.upper
    fracs = np.linspace(0.25, 0.75, per_dim)
    axes = [lo[j] + fracs * (hi[j] - lo[j]) for j in range(model.dim_beta)]
    return [np.array(combo) for combo in itertools.product(*axes)]


def fit_nls_multistart(
    data: DataSet,
    model: ModelSpec,
    inits,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> FitResult:
    """Best-SSE fit over several starting points.

    Converged results are preferred over non-converged ones; ties broken by
    final SSE.  Singular starts are skipped unless every start is singular.
    """
    best: FitResult | None = None
    failures = 0
    inits = list(inits)
    for start in inits:
        try:
            fit = fit_nls(data, model, start, tol=tol, max_iter=max_iter)
        except SolverFailureError:
            failures += 1
            continue
        if best is None or (fit.converged, -fit.final_sse) > (
            best.converged,
            -best.final_sse,
        ):
            best = fit
    if best is None:
        raise SolverFailureError(f"all {failures} starts failed with singular systems")
    return best


def estimate_sigma2(data: DataSet, model: ModelSpec, beta) -> float:
    """Mean squared residual at ``beta`` (the plug-in error variance)."""
    beta = np.asarray(beta, dtype=float)
    if not model.domain.contains(beta):
        raise ValueError("beta must lie inside the parameter domain")
    resid = data.y - f_values(model, data.x, beta)
    return float(resid @ resid) / data.n


def estimate_V(data: DataSet, model: ModelSpec, beta) -> np.ndarray:
    """Average outer product of gradient rows at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    if not model.domain.contains(beta):
        raise ValueError("beta must lie inside the parameter domain")
    g_rows = grad_values(model, data.x, beta)
    v = (g_rows.T @ g_rows) / data.n
    return 0.5 * (v + v.T)


def score_vectors(data: DataSet, model: ModelSpec, beta) -> ScoreVectors:
    """Score rows and their prefix sums at ``beta``."""
    beta = np.asarray(beta, dtype=float)
    if not model.domain.contains(beta):
        raise ValueError("beta must lie inside the parameter domain")
    resid = data.y - f_values(model, data.x, beta)
    g = grad_values(model, data.x, beta) * resid[:, None]
    prefix = np.vstack([np.zeros((1, model.dim_beta)), np.cumsum(g, axis=0)])
    return ScoreVectors(g=g, prefix=prefix)
