"""Epidemic (two change-point) test: temporary departure and return.

Under the alternative the middle segment J' = {k1+1..k2} follows a second
parameter while the outer segments I' = {1..k1} and {k2+1..n} share the
baseline one.  The scan maximizes the same plug-in quadratic form as the
single-change test, with the two segment means taken over I' and J' and
theta = |I'| / n, over every admissible pair k1 < k2.  Prefix sums make the
full O(n^2) pair sweep affordable.

There is no closed-form critical value for the pair maximum here; the
decision threshold is calibrated by a parametric bootstrap that simulates
no-change data from the fitted model with Gaussian errors and takes an
empirical quantile of the resulting pair maxima.  Reports carry the
calibration parameters so the departure from an asymptotic threshold is
visible downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._linalg import spd_factor, spd_solve
from .estimation import DataSet, FitResult, ScoreVectors, fit_nls, score_vectors
from .eltest import ExactELState, _check_degenerate, _exact_state, _fit_h0
from .exceptions import CalibrationFailureError, DegenerateVarianceError
from .model import ModelSpec, f_values
from .simseed import child_seed

__all__ = [
    "default_epidemic_trim",
    "epidemic_statistic",
    "epidemic_scan_statistics",
    "EpidemicScanResult",
    "epidemic_scan",
    "calibrate_threshold",
    "exact_epidemic_statistic",
]

_PAIR_CHUNK = 200_000


def default_epidemic_trim(n: int) -> int:
    """Default number of excluded observations at each end: ceil(2 sqrt(n))."""
    return int(math.ceil(2.0 * math.sqrt(n)))


def _segment_stats(scores, k1, k2, sigma2, factor):
    n = scores.n
    s1 = scores.prefix[k1]
    s2 = scores.prefix[k2]
    sn = scores.prefix[n]
    size_outer = n - k2 + k1
    size_inner = k2 - k1
    w_outer = (s1 + sn - s2) / size_outer
    w_inner = (s2 - s1) / size_inner
    theta = size_outer / n
    diff = w_outer - w_inner
    quad = float(diff @ spd_solve(factor, diff))
    return max(n / sigma2 * theta * (1.0 - theta) * quad, 0.0)


def epidemic_statistic(
    scores: ScoreVectors, k1: int, k2: int, n: int, sigma2: float, v: np.ndarray
) -> float:
    """Plug-in statistic for one (k1, k2) pair.

    Both the inner segment and the union of the outer segments must keep at
    least d+1 observations.
    """
    if sigma2 <= 0.0:
        raise DegenerateVarianceError("sigma2 must be positive")
    d = scores.d
    if not (0 < k1 < k2 < n):
        raise ValueError("need 0 < k1 < k2 < n")
    if k2 - k1 < d + 1 or n - k2 + k1 < d + 1:
        raise ValueError("each segment needs at least d+1 observations")
    return _segment_stats(scores, k1, k2, sigma2, spd_factor(v))


def _admissible_k2(n, k1, trim2, d):
    lo = max(k1 + d + 1, k1 + 1)
    hi = min(n - trim2 - 1, n + k1 - d - 1)
    return lo, hi


# Flat (k1, k2) index arrays in lexicographic order plus the pair weight
# 1 / (|I'| |J'|), cached per geometry: every scan over the same
# (n, trims, d) reuses them, which matters when a bootstrap calibration
# reruns the sweep hundreds of times.
_pair_cache: dict[tuple[int, int, int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _pair_arrays(n: int, trim1: int, trim2: int, d: int):
    key = (n, trim1, trim2, d)
    cached = _pair_cache.get(key)
    if cached is None:
        k1_parts, k2_parts = [], []
        for k1 in range(trim1 + 1, n - trim2 - 1):
            lo, hi = _admissible_k2(n, k1, trim2, d)
            if lo > hi:
                continue
            k2r = np.arange(lo, hi + 1, dtype=np.int64)
            k1_parts.append(np.full(k2r.size, k1, dtype=np.int64))
            k2_parts.append(k2r)
        if not k1_parts:
            raise ValueError("trimming leaves no admissible (k1, k2) pair")
        k1_all = np.concatenate(k1_parts)
        k2_all = np.concatenate(k2_parts)
        size_outer = (n - k2_all + k1_all).astype(float)
        inv_sizes = 1.0 / (size_outer * (n - size_outer))
        cached = (k1_all, k2_all, inv_sizes)
        if len(_pair_cache) > 32:
            _pair_cache.clear()
        _pair_cache[key] = cached
    return cached


def epidemic_scan_statistics(
    scores: ScoreVectors,
    trim1: int,
    trim2: int,
    sigma2: float,
    v: np.ndarray,
) -> tuple[float, int, int]:
    """Maximize the pair statistic over trim1 < k1 < k2 < n - trim2.

    Returns ``(stat_max, k1_hat, k2_hat)`` with the lexicographically
    smallest maximizing pair.

    The sweep runs on the bridge form of the statistic: with
    ``b(k) = S(k) - (k/n) S(n)`` the segment-mean difference satisfies
    ``w_outer - w_inner = n (b(k1) - b(k2)) / (|I'| |J'|)``, which reduces
    the statistic to

        stat(k1, k2) = n/sigma2 * (b(k1)-b(k2))' V^-1 (b(k1)-b(k2)) / (|I'| |J'|)

    with the pair weights ``1/(|I'| |J'|)`` cached per geometry;
    algebraically identical to the definition and far cheaper per pair.
    """
    if sigma2 <= 0.0:
        raise DegenerateVarianceError("sigma2 must be positive")
    n, d = scores.n, scores.d
    factor = spd_factor(v)
    v_inv = spd_solve(factor, np.eye(d))
    prefix = scores.prefix
    # bridge rows, transposed so column gathers hit contiguous memory
    ks = np.arange(n + 1, dtype=float)
    bridge = np.ascontiguousarray((prefix - np.outer(ks / n, prefix[n])).T)
    k1_all, k2_all, inv_sizes = _pair_arrays(n, trim1, trim2, d)
    scale = n / sigma2

    best = (-1.0, -1, -1)
    for start in range(0, k1_all.size, _PAIR_CHUNK):
        k1c = k1_all[start : start + _PAIR_CHUNK]
        k2c = k2_all[start : start + _PAIR_CHUNK]
        quad = None
        cols = [bridge[j][k1c] - bridge[j][k2c] for j in range(d)]
        for a in range(d):
            for b in range(a, d):
                weight = v_inv[a, b] if a == b else 2.0 * v_inv[a, b]
                term = weight * cols[a] * cols[b]
                quad = term if quad is None else quad + term
        stats = scale * quad * inv_sizes[start : start + _PAIR_CHUNK]
        i = int(np.argmax(stats))
        if stats[i] > best[0]:
            best = (float(stats[i]), int(k1c[i]), int(k2c[i]))
    return max(best[0], 0.0), best[1], best[2]


@dataclass(frozen=True)
class EpidemicScanResult:
    stat_max: float
    k1_hat: int
    k2_hat: int
    theta_hat: float
    threshold: float
    reject: bool
    alpha: float
    trim: tuple[int, int]
    bootstrap_reps: int
    fit: FitResult


def calibrate_threshold(
    fit: FitResult,
    model: ModelSpec,
    x_rows: np.ndarray,
    alpha: float,
    B: int = 200,
    seed: int = 0,
    trim: tuple[int, int] | None = None,
) -> float:
    """Parametric-bootstrap threshold for the epidemic pair maximum.

    Simulates ``B`` no-change datasets ``y* = f(x, beta_hat) + sigma_hat N(0,1)``
    on the observed design, reruns the full pipeline (fit, scores, pair scan)
    on each, and returns the empirical (1-alpha) quantile of the maxima,
    taken as the order statistic of rank ceil((1-alpha)(B+1)) clipped to
    [1, B] (the exceedance rule) -- so ``alpha=1`` gives the bootstrap
    minimum and the threshold grows weakly as alpha shrinks.

    Raises CalibrationFailureError when more than 20% of the draws fail.
    """
    if B < 50:
        raise ValueError("need at least B=50 bootstrap replicates")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    x_rows = np.asarray(x_rows, dtype=float)
    n = x_rows.shape[0]
    if trim is None:
        t = default_epidemic_trim(n)
        trim = (t, t)
    mean = f_values(model, x_rows, fit.beta_hat)
    sigma = math.sqrt(fit.sigma2_hat)
    maxima = []
    failures = 0
    for b in range(B):
        rng = np.random.default_rng(child_seed(seed, b))
        y_star = mean + sigma * rng.standard_normal(n)
        try:
            data_b = DataSet(x=x_rows, y=y_star)
            fit_b = fit_nls(data_b, model, fit.beta_hat)
            if not fit_b.converged:
                failures += 1
                continue
            _check_degenerate(fit_b.sigma2_hat, y_star)
            scores_b = score_vectors(data_b, model, fit_b.beta_hat)
            stat, _, _ = epidemic_scan_statistics(
                scores_b, trim[0], trim[1], fit_b.sigma2_hat, fit_b.v_hat
            )
        except Exception:
            failures += 1
            continue
        maxima.append(stat)
    if failures > 0.2 * B:
        raise CalibrationFailureError(
            f"{failures}/{B} bootstrap replicates failed during calibration"
        )
    maxima.sort()
    rank = int(math.ceil((1.0 - alpha) * (len(maxima) + 1)))
    rank = min(max(rank, 1), len(maxima))
    return float(maxima[rank - 1])


def epidemic_scan(
    data: DataSet,
    model: ModelSpec,
    alpha: float = 0.05,
    trim: tuple[int, int] | None = None,
    *,
    bootstrap_reps: int = 200,
    seed: int = 0,
    init=None,
    tol: float = 1e-8,
    max_iter: int = 200,
    multistart: bool = True,
    fit: FitResult | None = None,
    threshold: float | None = None,
) -> EpidemicScanResult:
    """Two change-point test: full pair scan plus bootstrap threshold.

    A precomputed ``threshold`` skips the calibration (useful when scanning
    many datasets that share a fitted null model).
    """
    n, d = data.n, model.dim_beta
    if trim is None:
        t = default_epidemic_trim(n)
        trim = (t, t)
    trim = (int(trim[0]), int(trim[1]))
    if n - trim[0] - trim[1] < 2 * (d + 1):
        raise ValueError("trimming leaves fewer than 2(d+1) interior observations")

    if fit is None:
        fit = _fit_h0(data, model, init, tol, max_iter, multistart)
    _check_degenerate(fit.sigma2_hat, data.y)

    scores = score_vectors(data, model, fit.beta_hat)
    stat_max, k1_hat, k2_hat = epidemic_scan_statistics(
        scores, trim[0], trim[1], fit.sigma2_hat, fit.v_hat
    )
    if threshold is None:
        threshold = calibrate_threshold(
            fit, model, data.x, alpha, B=bootstrap_reps, seed=seed, trim=trim
        )
    return EpidemicScanResult(
        stat_max=stat_max,
        k1_hat=k1_hat,
        k2_hat=k2_hat,
        theta_hat=(n - k2_hat + k1_hat) / n,
        threshold=float(threshold),
        reject=bool(stat_max >= threshold),
        alpha=alpha,
        trim=trim,
        bootstrap_reps=bootstrap_reps,
        fit=fit,
    )


def exact_epidemic_statistic(
    data: DataSet,
    model: ModelSpec,
    k1: int,
    k2: int,
    init=None,
    *,
    tol: float | None = None,
) -> ExactELState:
    """Exact-mode statistic for one (k1, k2) pair, with the outer segments
    playing the role of the first set and theta = (n - k2 + k1) / n."""
    n, d = data.n, model.dim_beta
    if not (0 < k1 < k2 < n):
        raise ValueError("need 0 < k1 < k2 < n")
    if k2 - k1 < d + 1 or n - k2 + k1 < d + 1:
        raise ValueError("each segment needs at least d+1 observations")
    in_first = np.ones(n, dtype=bool)
    in_first[k1:k2] = False
    return _exact_state(data, model, in_first, (n - k2 + k1) / n, init, tol)
