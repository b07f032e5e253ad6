"""Scikit-learn style facade over the change-point tests.

Each detector is a thin ``BaseEstimator``: constructor arguments are stored
verbatim (so ``get_params``/``set_params``/``clone`` work), ``fit(X, y)``
runs the corresponding test and exposes the outcome through trailing
underscore attributes, and ``predict(X)`` returns the fitted no-change mean.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .epidemic import epidemic_scan
from .estimation import DataSet
from .eltest import exact_statistic, scan, trimming_default, trimming_plan
from .lsbaseline import sup_f
from .model import f_values, get_model

__all__ = [
    "ELChangePointDetector",
    "EpidemicChangePointDetector",
    "SupFChangePointDetector",
]


class _DetectorBase(BaseEstimator):
    def _validate(self, X, y):
        X, y = check_X_y(X, y, ensure_2d=True, dtype=float, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        self.model_ = get_model(self.model, dim_x=X.shape[1])
        return DataSet(x=X, y=y)

    def predict(self, X):
        """Fitted no-change regression mean at new covariates."""
        check_is_fitted(self, "beta_hat_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return f_values(self.model_, X, self.beta_hat_)


class ELChangePointDetector(_DetectorBase):
    """Single change-point test as an estimator.

    Parameters mirror :func:`cpelt.eltest.scan`; after ``fit`` the decision
    lives in ``reject_``, the split estimate in ``k_hat_`` and the full
    scan in ``result_``.
    """

    def __init__(
        self,
        model: str = "ratio_power",
        alpha: float = 0.05,
        theta1: float | None = None,
        theta2: float | None = None,
        init=None,
        exact: bool = False,
        tol: float = 1e-8,
        max_iter: int = 200,
    ):
        self.model = model
        self.alpha = alpha
        self.theta1 = theta1
        self.theta2 = theta2
        self.init = init
        self.exact = exact
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        data = self._validate(X, y)
        d = self.model_.dim_beta
        if self.theta1 is not None or self.theta2 is not None:
            if self.theta1 is None or self.theta2 is None:
                raise ValueError("set both theta1 and theta2 or neither")
            plan = trimming_plan(data.n, self.theta1, self.theta2, d=d)
        else:
            plan = trimming_default(data.n, d=d)
        res = scan(
            data,
            self.model_,
            alpha=self.alpha,
            plan=plan,
            init=self.init,
            tol=self.tol,
            max_iter=self.max_iter,
        )
        self.result_ = res
        self.beta_hat_ = res.fit.beta_hat
        self.sigma2_hat_ = res.fit.sigma2_hat
        self.t_max_ = res.t_max
        self.sqrt_t_max_ = float(np.sqrt(res.t_max))
        self.k_hat_ = res.k_hat
        self.theta_hat_ = res.theta_hat
        self.critical_value_ = res.c_alpha
        self.reject_ = res.reject
        if self.exact:
            self.exact_state_ = exact_statistic(
                data, self.model_, res.k_hat, init=res.fit.beta_hat
            )
        return self


class EpidemicChangePointDetector(_DetectorBase):
    """Two change-point (epidemic) test with bootstrap threshold."""

    def __init__(
        self,
        model: str = "ratio_power",
        alpha: float = 0.05,
        trim: int | tuple[int, int] | None = None,
        bootstrap_reps: int = 200,
        seed: int = 0,
        init=None,
    ):
        self.model = model
        self.alpha = alpha
        self.trim = trim
        self.bootstrap_reps = bootstrap_reps
        self.seed = seed
        self.init = init

    def fit(self, X, y):
        data = self._validate(X, y)
        trim = self.trim
        if isinstance(trim, int):
            trim = (trim, trim)
        res = epidemic_scan(
            data,
            self.model_,
            alpha=self.alpha,
            trim=trim,
            bootstrap_reps=self.bootstrap_reps,
            seed=self.seed,
            init=self.init,
        )
        self.result_ = res
        self.beta_hat_ = res.fit.beta_hat
        self.sigma2_hat_ = res.fit.sigma2_hat
        self.stat_max_ = res.stat_max
        self.k1_hat_ = res.k1_hat
        self.k2_hat_ = res.k2_hat
        self.threshold_ = res.threshold
        self.reject_ = res.reject
        return self


class SupFChangePointDetector(_DetectorBase):
    """Least-squares sup-F baseline as an estimator."""

    def __init__(
        self,
        model: str = "ratio_power",
        theta1: float | None = None,
        theta2: float | None = None,
        init=None,
    ):
        self.model = model
        self.theta1 = theta1
        self.theta2 = theta2
        self.init = init

    def fit(self, X, y):
        data = self._validate(X, y)
        d = self.model_.dim_beta
        if self.theta1 is not None or self.theta2 is not None:
            if self.theta1 is None or self.theta2 is None:
                raise ValueError("set both theta1 and theta2 or neither")
            plan = trimming_plan(data.n, self.theta1, self.theta2, d=d)
        else:
            plan = trimming_default(data.n, d=d)
        res = sup_f(data, self.model_, plan=plan, init=self.init)
        self.result_ = res
        self.f_max_ = res.f_max
        self.k_at_max_ = res.k_at_max
        self.reject_ = res.reject
        self.per_k_failures_ = res.per_k_failures
        self.beta_hat_ = res.fit.beta_hat
        self.sigma2_hat_ = res.fit.sigma2_hat
        return self
