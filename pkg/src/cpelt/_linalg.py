"""Small shared linear-algebra helpers."""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import SingularMatrixError

# Condition-number threshold beyond which a single ridge repair is attempted.
COND_MAX = 1e12
RIDGE_REL = 1e-10


def spd_factor(v: np.ndarray):
    """Cholesky factor of a symmetric PSD matrix with one ridge retry.

    If the condition estimate exceeds ``COND_MAX`` (or the factorization
    fails outright), ``(RIDGE_REL * trace(v)/d) * I`` is added once and the
    factorization retried; a second failure raises
    :class:`~cpelt.exceptions.SingularMatrixError`.
    """
    v = np.asarray(v, dtype=float)
    v = 0.5 * (v + v.T)
    d = v.shape[0]
    needs_ridge = False
    try:
        if np.linalg.cond(v) > COND_MAX:
            needs_ridge = True
    except np.linalg.LinAlgError:
        needs_ridge = True
    if not needs_ridge:
        try:
            return cho_factor(v, lower=True)
        except np.linalg.LinAlgError:
            needs_ridge = True
    ridge = RIDGE_REL * (np.trace(v) / d)
    if not np.isfinite(ridge) or ridge <= 0.0:
        ridge = np.finfo(float).tiny
    try:
        return cho_factor(v + ridge * np.eye(d), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(
            f"{d}x{d} matrix is singular beyond ridge repair"
        ) from exc


def spd_solve(factor, b: np.ndarray) -> np.ndarray:
    """Solve with a factor returned by :func:`spd_factor`."""
    return cho_solve(factor, b)


def quad_form_rows(factor, rows: np.ndarray) -> np.ndarray:
    """Row-wise quadratic forms ``rows[i] @ V^-1 @ rows[i]`` from a factor."""
    sol = cho_solve(factor, rows.T).T
    return np.einsum("ij,ij->i", rows, sol)
