"""Least-squares sup-F baseline for head-to-head comparison.

For every admissible split the model is refit separately on the two
segments (warm-started at the pooled fit) and a Chow-style F statistic

    F(k) = ((SSR0 - SSR1(k)) / d) / (SSR1(k) / (n - 2d))

compares the pooled fit against the split one; the decision compares the
maximum over splits with the fixed constant 12.85.  Splits whose segment
fits do not converge are counted as failures and skipped rather than
aborting the whole scan; only a scan with no surviving split raises.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import DataSet, FitResult, fit_nls
from .eltest import TrimmingPlan, _fit_h0, trimming_default
from .exceptions import BaselineUnavailableError, SolverFailureError
from .model import ModelSpec

__all__ = ["SUPF_CRITICAL", "SupFResult", "sup_f"]

# Fixed 5% critical constant for the sup-F comparison (tabulated for the
# relevant trimming in the multiple-breakpoint literature).
SUPF_CRITICAL = 12.85


@dataclass(frozen=True)
class SupFResult:
    f_max: float
    k_at_max: int
    reject: bool
    per_k_failures: int
    ks: np.ndarray
    f_stats: np.ndarray
    ssr0: float
    fit: FitResult


def sup_f(
    data: DataSet,
    model: ModelSpec,
    plan: TrimmingPlan | None = None,
    init=None,
    *,
    tol: float = 1e-8,
    max_iter: int = 200,
    multistart: bool = True,
) -> SupFResult:
    """Sup-F scan over the trimmed split range.

    Degenerate convention: an exactly interpolating split (SSR1 = 0) yields
    F = 0 when the pooled fit interpolates too, and +inf otherwise.
    """
    n, d = data.n, model.dim_beta
    if plan is None:
        plan = trimming_default(n, d=d)
    if plan.n != n:
        raise ValueError("plan was built for a different sample size")
    if n <= 2 * d:
        raise ValueError("need n > 2d observations for the F denominator")

    pooled = _fit_h0(data, model, init, tol, max_iter, multistart)
    ssr0 = pooled.final_sse
    warm = pooled.beta_hat

    # Segment fits need at least 2(d+1) rows each.
    k_lo = max(plan.k_lo, 2 * (d + 1))
    k_hi = min(plan.k_hi, n - 2 * (d + 1))

    ks, f_stats = [], []
    failures = 0
    for k in range(k_lo, k_hi + 1):
        try:
            left = fit_nls(
                DataSet(x=data.x[:k], y=data.y[:k]), model, warm,
                tol=tol, max_iter=max_iter,
            )
            right = fit_nls(
                DataSet(x=data.x[k:], y=data.y[k:]), model, warm,
                tol=tol, max_iter=max_iter,
            )
        except SolverFailureError:
            failures += 1
            continue
        if not (left.converged and right.converged):
            failures += 1
            continue
        ssr1 = left.final_sse + right.final_sse
        if ssr1 <= 0.0:
            f_val = 0.0 if ssr0 <= 1e-12 * n else np.inf
        else:
            f_val = ((ssr0 - ssr1) / d) / (ssr1 / (n - 2 * d))
        ks.append(k)
        f_stats.append(f_val)

    if not ks:
        raise BaselineUnavailableError("every split fit failed to converge")

    ks_arr = np.asarray(ks)
    f_arr = np.asarray(f_stats, dtype=float)
    idx = int(np.argmax(f_arr))
    f_max = float(f_arr[idx])
    return SupFResult(
        f_max=f_max,
        k_at_max=int(ks_arr[idx]),
        reject=bool(f_max >= SUPF_CRITICAL),
        per_k_failures=failures,
        ks=ks_arr,
        f_stats=f_arr,
        ssr0=ssr0,
        fit=pooled,
    )
