"""Single change-point test for nonlinear regression.

The scan fits the no-change model once, forms per-observation score rows at
the fitted parameter, and evaluates for every admissible split a plug-in
quadratic form

    T(theta_k) = n / sigma2 * theta (1 - theta) *
                 (W1 - W2)' V^-1 (W1 - W2),        theta = k / n,

where ``W1``/``W2`` are the segment means of the score rows.  The decision
compares ``sqrt(max_k T)`` with an asymptotic extreme-value critical value
``c_alpha = (-log(-log alpha) + D(log u)) / A(log u)`` built from the
trimming fractions, with ``A(x) = sqrt(2 log x)`` and
``D(x) = 2 log x + log log x``.  The split maximizing the statistic is the
change-point estimate.

Two slower companions are included for diagnostics: a per-segment
empirical-likelihood log-ratio (:func:`owen_el_logratio`) and an exact-mode
statistic (:func:`exact_statistic`) that solves the coupled score equations
in the multiplier and the regression parameter instead of plugging in.

A note on calibration: on strongly trending designs with nearly collinear
gradient directions (the built-in ``ratio_power`` model is one) the
finite-sample distribution of ``sqrt(max_k T)`` sits far above the
asymptotic formula's alpha-quantile, so the test rejects much more often
than the nominal level.  ``tests/test_acceptance.py`` measures this
honestly; prefer the bootstrap-calibrated epidemic scan when a calibrated
size matters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import quad_form_rows, spd_factor, spd_solve
from .estimation import (
    DataSet,
    FitResult,
    ScoreVectors,
    fit_nls,
    fit_nls_multistart,
    grid_inits,
    score_vectors,
)
from .exceptions import (
    DegenerateVarianceError,
    NoSolutionError,
    NonConvergenceError,
    PlanTooWideError,
)
from .model import ModelSpec, f_values, grad_values

__all__ = [
    "TrimmingPlan",
    "trimming_default",
    "trimming_plan",
    "u_of_n",
    "u_value",
    "critical_value",
    "SegmentMeans",
    "segment_means",
    "approx_statistic",
    "scan_statistics",
    "ScanResult",
    "scan",
    "owen_el_logratio",
    "ExactELState",
    "exact_statistic",
]


# --------------------------------------------------------------------------
# trimming and critical values
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrimmingPlan:
    """Admissible split range: k in [k_lo, k_hi], theta bounds in (0, 1)."""

    n: int
    theta1: float
    theta2: float
    k_lo: int
    k_hi: int

    def __post_init__(self):
        if not (0.0 < self.theta1 < self.theta2 < 1.0):
            raise ValueError("need 0 < theta1 < theta2 < 1")
        if not (1 <= self.k_lo <= self.k_hi <= self.n - 1):
            raise ValueError("empty admissible split range")


def trimming_plan(n: int, theta1: float, theta2: float, d: int = 1) -> TrimmingPlan:
    """Plan from explicit trimming fractions, clamped so both segments keep
    at least d+1 observations."""
    k_lo = max(int(math.ceil(n * theta1)), d + 1)
    k_hi = min(int(math.floor(n * theta2)), n - d - 1)
    return TrimmingPlan(n=n, theta1=theta1, theta2=theta2, k_lo=k_lo, k_hi=k_hi)


def trimming_default(n: int, d: int = 1) -> TrimmingPlan:
    """Default symmetric trimming ``theta1 = 2/sqrt(n)``, ``theta2 = 1 - theta1``."""
    if n < 4 * (d + 1):
        raise ValueError(f"need n >= 4(d+1) = {4 * (d + 1)}, got {n}")
    theta1 = 2.0 / math.sqrt(n)
    return trimming_plan(n, theta1, 1.0 - theta1, d=d)


def u_value(theta1: float, theta2: float) -> float:
    """Trimming functional ``(1 - theta1 theta2) / (theta1 (1 - theta2))``."""
    return (1.0 - theta1 * theta2) / (theta1 * (1.0 - theta2))


def u_of_n(plan: TrimmingPlan) -> float:
    """Trimming functional of a plan's fractions."""
    return u_value(plan.theta1, plan.theta2)


def critical_value(alpha: float, plan: TrimmingPlan) -> float:
    """Asymptotic critical value for ``sqrt(max_k T)`` at level ``alpha``.

    Uses ``(-log(-log alpha) + D(log u)) / A(log u)`` with
    ``A(x) = sqrt(2 log x)`` and ``D(x) = 2 log x + log log x``; requires
    ``u > e`` so the iterated logarithms are defined.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    u = u_of_n(plan)
    x = math.log(u)
    if x <= 1.0:
        raise PlanTooWideError(
            f"u(n) = {u:.6g} <= e; widen the trimming (shrink [theta1, theta2])"
        )
    a = math.sqrt(2.0 * math.log(x))
    d_val = 2.0 * math.log(x) + math.log(math.log(x))
    return (-math.log(-math.log(alpha)) + d_val) / a


# --------------------------------------------------------------------------
# plug-in scan
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentMeans:
    """Mean score row before and after a split."""

    w1: np.ndarray
    w2: np.ndarray
    k: int
    n: int


def segment_means(scores: ScoreVectors, k: int) -> SegmentMeans:
    """Segment means from prefix sums for any interior split.

    Trimming plans keep scans at least d+1 observations from the ends; the
    arithmetic itself needs only non-empty segments.
    """
    n = scores.n
    if not (1 <= k <= n - 1):
        raise ValueError(f"k={k} outside interior range [1, {n - 1}]")
    s_k = scores.prefix[k]
    s_n = scores.prefix[n]
    return SegmentMeans(w1=s_k / k, w2=(s_n - s_k) / (n - k), k=k, n=n)


def approx_statistic(
    means: SegmentMeans, k: int, n: int, sigma2: float, v: np.ndarray
) -> float:
    """Plug-in statistic ``n/sigma2 * theta(1-theta) * diff' V^-1 diff``."""
    if sigma2 <= 0.0:
        raise DegenerateVarianceError("sigma2 must be positive")
    theta = k / n
    diff = means.w1 - means.w2
    factor = spd_factor(v)
    quad = float(diff @ spd_solve(factor, diff))
    return max(n / sigma2 * theta * (1.0 - theta) * quad, 0.0)


def scan_statistics(
    scores: ScoreVectors, plan: TrimmingPlan, sigma2: float, v: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized plug-in statistic over every admissible split.

    Returns ``(ks, stats)`` where ``stats[i]`` is the statistic at split
    ``ks[i]``.
    """
    if sigma2 <= 0.0:
        raise DegenerateVarianceError("sigma2 must be positive")
    n = scores.n
    ks = np.arange(plan.k_lo, plan.k_hi + 1)
    s_k = scores.prefix[ks]
    s_n = scores.prefix[n]
    w1 = s_k / ks[:, None]
    w2 = (s_n - s_k) / (n - ks)[:, None]
    diff = w1 - w2
    factor = spd_factor(v)
    quad = quad_form_rows(factor, diff)
    theta = ks / n
    stats = n / sigma2 * theta * (1.0 - theta) * quad
    return ks, np.maximum(stats, 0.0)


@dataclass(frozen=True)
class ScanResult:
    """Full outcome of the single change-point scan."""

    ks: np.ndarray
    stats: np.ndarray
    t_max: float
    k_hat: int
    theta_hat: float
    alpha: float
    c_alpha: float
    reject: bool
    plan: TrimmingPlan
    fit: FitResult


def _fit_h0(data, model, init, tol, max_iter, multistart):
    fit = fit_nls(data, model, init, tol=tol, max_iter=max_iter)
    if not fit.converged and multistart:
        starts = grid_inits(model)
        if init is not None:
            starts = [np.asarray(init, dtype=float)] + starts
        fit = fit_nls_multistart(data, model, starts, tol=tol, max_iter=max_iter)
    if not fit.converged:
        raise NonConvergenceError("no-change fit did not converge from any start")
    return fit


def _check_degenerate(sigma2: float, y: np.ndarray) -> None:
    # "Zero" is judged relative to the response scale: a fit this good is an
    # interpolation, for which the scan statistic is undefined.
    if sigma2 <= 1e-12 * max(1.0, float(np.var(y))):
        raise DegenerateVarianceError(
            f"estimated error variance {sigma2:.3e} is numerically zero"
        )


def scan(
    data: DataSet,
    model: ModelSpec,
    alpha: float = 0.05,
    plan: TrimmingPlan | None = None,
    init=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    multistart: bool = True,
    fit: FitResult | None = None,
) -> ScanResult:
    """Run the single change-point test end to end.

    Fits the no-change model (grid multi-start fallback if the first start
    does not converge), evaluates the plug-in statistic at every admissible
    split and compares ``sqrt(t_max)`` with the asymptotic critical value.
    The estimate ``k_hat`` is the smallest maximizing split.

    A precomputed ``fit`` may be passed to skip the internal fit (used by
    the bootstrap calibration and the simulation lab).
    """
    if plan is None:
        plan = trimming_default(data.n, d=model.dim_beta)
    if plan.n != data.n:
        raise ValueError("plan was built for a different sample size")
    d = model.dim_beta
    if plan.k_lo < d + 1 or plan.k_hi > data.n - d - 1:
        raise ValueError("plan leaves fewer than d+1 observations in a segment")

    if fit is None:
        fit = _fit_h0(data, model, init, tol, max_iter, multistart)
    _check_degenerate(fit.sigma2_hat, data.y)

    scores = score_vectors(data, model, fit.beta_hat)
    ks, stats = scan_statistics(scores, plan, fit.sigma2_hat, fit.v_hat)
    idx = int(np.argmax(stats))  # first occurrence = smallest maximizing k
    t_max = float(stats[idx])
    k_hat = int(ks[idx])
    c_alpha = critical_value(alpha, plan)
    return ScanResult(
        ks=ks,
        stats=stats,
        t_max=t_max,
        k_hat=k_hat,
        theta_hat=k_hat / data.n,
        alpha=alpha,
        c_alpha=c_alpha,
        reject=bool(math.sqrt(t_max) >= c_alpha),
        plan=plan,
        fit=fit,
    )


# --------------------------------------------------------------------------
# per-segment empirical likelihood (Owen-style dual)
# --------------------------------------------------------------------------

def _el_multiplier(rows: np.ndarray, tol: float, max_iter: int = 100):
    """Newton solve of ``sum_i rows_i / (1 + lam' rows_i) = 0``.

    Minimizes the convex dual ``-sum log(1 + lam' rows_i)`` with an Armijo
    step-halving line search that keeps every ``1 + lam' rows_i`` positive;
    a near-singular Hessian (strongly collinear rows) gets one ridge retry
    and the direction falls back to steepest descent when the Newton system
    is too degenerate.  Returns ``(lam, denom)``; raises NoSolutionError
    when no positive-weight solution exists (zero outside the convex hull
    of the rows).
    """
    m, d = rows.shape
    lam = np.zeros(d)
    denom = np.ones(m)
    obj = 0.0  # -sum(log denom)
    for _ in range(max_iter):
        inv = 1.0 / denom
        score = rows.T @ inv
        if np.linalg.norm(score) <= tol:
            # At a true solution sum(1/denom) = m exactly; a runaway
            # multiplier drives the score to zero without satisfying the
            # constraint, and this identity catches it.
            if abs(inv.sum() - m) > 1e-6 * m:
                raise NoSolutionError(
                    "zero lies outside the convex hull of the rows"
                )
            return lam, denom
        weights = inv * inv
        hess = rows.T @ (rows * weights[:, None])
        step = None
        try:
            step = np.linalg.solve(hess, score)
        except np.linalg.LinAlgError:
            ridge = 1e-10 * (np.trace(hess) / d) + np.finfo(float).tiny
            try:
                step = np.linalg.solve(hess + ridge * np.eye(d), score)
            except np.linalg.LinAlgError:
                step = None
        if step is None or not np.all(np.isfinite(step)):
            step = score
        slope = -float(score @ step)  # directional derivative of the dual
        if slope >= 0.0:
            step = score
            slope = -float(score @ score)
        score_norm = float(np.linalg.norm(score))
        t = 1.0
        for _ in range(50):
            cand = lam + t * step
            denom_new = 1.0 + rows @ cand
            if denom_new.min() > 0.0:
                obj_new = -float(np.log(denom_new).sum())
                # Near the optimum the objective decrease drowns in summation
                # noise, so a shrinking score norm also counts as progress.
                new_norm = float(np.linalg.norm(rows.T @ (1.0 / denom_new)))
                if obj_new <= obj + 1e-4 * t * slope or new_norm < score_norm:
                    lam, denom, obj = cand, denom_new, obj_new
                    break
            t *= 0.5
        else:
            raise NoSolutionError(
                "cannot keep empirical-likelihood weights positive"
            )
    raise NoSolutionError("multiplier iteration did not converge")


def owen_el_logratio(rows: np.ndarray, tol: float | None = None) -> tuple[float, np.ndarray]:
    """-2 log of the one-sample profile EL ratio for mean zero.

    Returns ``(value, lam)`` with ``value = 2 sum_i log(1 + lam' rows_i)``
    at the multiplier solving ``sum_i rows_i / (1 + lam' rows_i) = 0``.
    Requires more rows than columns; the zero vector must lie strictly
    inside the convex hull of the rows for a solution to exist.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-d array")
    m, d = rows.shape
    if m <= d:
        raise ValueError(f"need more rows than columns, got {m} x {d}")
    if tol is None:
        tol = 1e-9 * m
    lam, denom = _el_multiplier(rows, tol)
    return 2.0 * float(np.log(denom).sum()), lam


# --------------------------------------------------------------------------
# exact-mode statistic
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactELState:
    """Solution of the coupled score equations at one split."""

    lam: np.ndarray
    beta: np.ndarray
    t_nk: float
    weights_p: np.ndarray
    weights_q: np.ndarray
    score_norm: float
    iterations: int


def _hessian_rows(model: ModelSpec, x: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Per-row Hessian of f in beta via central differences of the gradient."""
    d = model.dim_beta
    n = x.shape[0]
    hess = np.empty((n, d, d))
    for j in range(d):
        h = 1e-6 * max(1.0, abs(float(beta[j])))
        shift = np.zeros(d)
        shift[j] = h
        gp = grad_values(model, x, beta + shift)
        gm = grad_values(model, x, beta - shift)
        hess[:, :, j] = (gp - gm) / (2.0 * h)
    return 0.5 * (hess + hess.transpose(0, 2, 1))


class _ExactProblem:
    """Coupled score equations for the exact statistic on a two-set split.

    ``in_first`` flags the rows of the first set (leading segment for the
    single-change statistic; the union of the outer segments for the
    epidemic variant).  ``theta`` is the first set's sample fraction.
    """

    def __init__(self, data: DataSet, model: ModelSpec, in_first: np.ndarray, theta: float):
        self.data = data
        self.model = model
        self.in_first = in_first
        self.theta = theta
        self.d = model.dim_beta

    def score_rows(self, beta):
        resid = self.data.y - f_values(self.model, self.data.x, beta)
        grad = grad_values(self.model, self.data.x, beta)
        return grad * resid[:, None], grad, resid

    def initial_multiplier(self, beta, tol):
        """Inner solve of the first score equation at fixed beta.

        The all-zero multiplier solves the system trivially together with
        any beta that balances the two segment means, a degenerate branch
        with a zero statistic; starting from the inner solution keeps the
        Newton iteration on the branch the asymptotics describe.
        """
        g, _, _ = self.score_rows(beta)
        h_rows = np.vstack(
            [
                g[self.in_first] / self.theta,
                -g[~self.in_first] / (1.0 - self.theta),
            ]
        )
        lam, _ = _el_multiplier(h_rows, tol)
        return lam

    def residual(self, lam, beta):
        """Stacked score equations; None when a log argument is non-positive."""
        g, grad, resid = self.score_rows(beta)
        proj = g @ lam
        den1 = self.theta + proj[self.in_first]
        den2 = (1.0 - self.theta) - proj[~self.in_first]
        if den1.min() <= 0.0 or den2.min() <= 0.0:
            return None
        g1, g2 = g[self.in_first], g[~self.in_first]
        f1 = (g1 / den1[:, None]).sum(axis=0) - (g2 / den2[:, None]).sum(axis=0)
        hess = _hessian_rows(self.model, self.data.x, beta)
        gdot = hess * resid[:, None, None] - grad[:, :, None] * grad[:, None, :]
        gl = gdot @ lam
        f2 = (gl[self.in_first] / den1[:, None]).sum(axis=0) - (
            gl[~self.in_first] / den2[:, None]
        ).sum(axis=0)
        return np.concatenate([f1, f2])

    def value(self, lam, beta):
        g, _, _ = self.score_rows(beta)
        proj = g @ lam
        den1 = self.theta + proj[self.in_first]
        den2 = (1.0 - self.theta) - proj[~self.in_first]
        return 2.0 * (
            float(np.log(den1 / self.theta).sum())
            + float(np.log(den2 / (1.0 - self.theta)).sum())
        )


def _solve_exact(problem: _ExactProblem, beta0: np.ndarray, tol: float, max_iter: int = 100):
    """Damped Newton on the score equations via block elimination.

    For every trial beta the multiplier equation is re-solved exactly (the
    inner problem is concave), which keeps the first score equation at zero
    along the whole path; the outer Newton drives the remaining d equations
    in beta, with a finite-difference Jacobian and a step-halving line
    search (40 halvings at most) that keeps the inner problem solvable --
    every log argument positive -- and the residual norm decreasing.
    """
    model = problem.model

    def reduced(beta):
        lam = problem.initial_multiplier(beta, 0.1 * tol)
        res = problem.residual(lam, beta)
        if res is None:
            raise NoSolutionError("log arguments not positive at inner solution")
        return lam, res

    beta = np.asarray(beta0, dtype=float)
    lam, res = reduced(beta)
    d = problem.d
    norm = float(np.linalg.norm(res))

    for it in range(1, max_iter + 1):
        if norm <= tol:
            return lam, beta, norm, it - 1
        jac = np.empty((2 * d, d))
        for j in range(d):
            h = 1e-6 * max(1.0, abs(float(beta[j])))
            shifted = beta.copy()
            shifted[j] += h
            try:
                _, res_p = reduced(model.domain.clip(shifted))
                jac[:, j] = (res_p - res) / h
                continue
            except NoSolutionError:
                pass
            shifted[j] = beta[j] - h
            try:
                _, res_m = reduced(model.domain.clip(shifted))
            except NoSolutionError as exc:
                raise NoSolutionError(
                    "inner problem infeasible on both sides of the iterate"
                ) from exc
            jac[:, j] = (res - res_m) / h
        step, *_ = np.linalg.lstsq(jac, -res, rcond=None)

        t = 1.0
        accepted = False
        feasible_seen = False
        for _ in range(40):
            cand = model.domain.clip(beta + t * step)
            try:
                lam_new, res_new = reduced(cand)
            except NoSolutionError:
                t *= 0.5
                continue
            feasible_seen = True
            norm_new = float(np.linalg.norm(res_new))
            if norm_new < norm:
                beta, lam, res, norm = cand, lam_new, res_new, norm_new
                accepted = True
                break
            t *= 0.5
        if not feasible_seen:
            raise NoSolutionError(
                "step cannot keep log arguments positive after 40 halvings"
            )
        if not accepted:
            raise NonConvergenceError(
                f"residual stalled at {norm:.3e} after {it} iterations"
            )
    if norm <= tol:
        return lam, beta, norm, max_iter
    raise NonConvergenceError(f"no convergence in {max_iter} iterations")


def _exact_state(data, model, in_first, theta, init, tol):
    problem = _ExactProblem(data, model, in_first, theta)
    if init is None:
        beta0 = fit_nls(data, model).beta_hat
    else:
        beta0 = np.asarray(init, dtype=float)
        if not model.domain.contains(beta0):
            raise ValueError("init must lie inside the parameter domain")
    if tol is None:
        tol = min(1e-6, 1e-8 * data.n)
    lam, beta, norm, iters = _solve_exact(problem, beta0, tol)
    g, _, _ = problem.score_rows(beta)
    proj = g @ lam
    n = data.n
    n_first = int(in_first.sum())
    # Reciprocal weights from the shared multiplier, normalized within each
    # segment so the reported vectors are the implied probability vectors.
    raw_p = 1.0 / (n_first + n * proj[in_first])
    raw_q = 1.0 / ((n - n_first) - n * proj[~in_first])
    return ExactELState(
        lam=lam,
        beta=beta,
        t_nk=problem.value(lam, beta),
        weights_p=raw_p / raw_p.sum(),
        weights_q=raw_q / raw_q.sum(),
        score_norm=norm,
        iterations=iters,
    )


def exact_statistic(
    data: DataSet,
    model: ModelSpec,
    k: int,
    init=None,
    *,
    tol: float | None = None,
) -> ExactELState:
    """Exact-mode statistic at split ``k``: solves the coupled score
    equations in (multiplier, beta) and returns

        2 sum_{i<=k} log(1 + lam'g_i/theta) +
        2 sum_{j>k}  log(1 - lam'g_j/(1-theta)).

    ``init`` is the starting parameter for the solve (defaults to the
    no-change least-squares estimate).  Diagnostic companion to
    :func:`scan`; the scan itself always uses the plug-in statistic.
    """
    d = model.dim_beta
    if not (d + 1 <= k <= data.n - d - 1):
        raise ValueError(f"k={k} leaves fewer than d+1 observations in a segment")
    in_first = np.zeros(data.n, dtype=bool)
    in_first[:k] = True
    return _exact_state(data, model, in_first, k / data.n, init, tol)
