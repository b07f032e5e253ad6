"""Parametric nonlinear regression models with analytic gradients.

A model pairs a mean function ``f(x, beta)`` with its analytic parameter
gradient and a compact box domain for ``beta``.  Both callables accept a
single covariate vector of shape ``(p,)`` or a stack of shape ``(n, p)``
and evaluate row-wise in the stacked case; the built-ins follow this
convention and user-supplied models should too.  No symbolic or automatic
differentiation is attempted: the gradient is whatever the caller registers,
and :func:`check_gradient` verifies it against central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import NumericEvaluationError, ParameterDomainError

__all__ = [
    "ParamDomain",
    "ModelSpec",
    "eval_f",
    "eval_grad",
    "check_gradient",
    "f_values",
    "grad_values",
    "ratio_power",
    "linear",
    "get_model",
    "BUILTIN_MODELS",
]


@dataclass(frozen=True)
class ParamDomain:
    """Box domain for the regression parameter (compact by construction)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("domain bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("need lower[j] < upper[j] for all j")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, beta, margin: float = 0.0) -> bool:
        beta = np.asarray(beta, dtype=float)
        return bool(
            beta.shape == self.lower.shape
            and np.all(beta >= self.lower + margin)
            and np.all(beta <= self.upper - margin)
        )

    def clip(self, beta) -> np.ndarray:
        return np.clip(np.asarray(beta, dtype=float), self.lower, self.upper)

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class ModelSpec:
    """A nonlinear regression function together with its parameter gradient.

    ``f(x, beta)`` returns the scalar mean for one covariate vector (or a
    length-n vector for a stacked ``(n, p)`` input); ``grad_f`` returns the
    length-d parameter gradient (or an ``(n, d)`` stack).
    """

    name: str
    dim_x: int
    dim_beta: int
    domain: ParamDomain
    f: Callable = field(repr=False)
    grad_f: Callable = field(repr=False)

    def __post_init__(self):
        if self.dim_x < 1 or self.dim_beta < 1:
            raise ValueError("dim_x and dim_beta must be >= 1")
        if self.domain.dim != self.dim_beta:
            raise ValueError("domain dimension does not match dim_beta")


def _check_point(model: ModelSpec, x, beta) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x.shape != (model.dim_x,):
        raise ValueError(f"covariate must have shape ({model.dim_x},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("covariate entries must be finite")
    if not model.domain.contains(beta):
        raise ParameterDomainError(
            f"beta={beta!r} outside the domain of model {model.name!r}"
        )
    return x, beta


def eval_f(model: ModelSpec, x, beta) -> float:
    """Evaluate the regression function at one covariate/parameter pair."""
    x, beta = _check_point(model, x, beta)
    val = float(model.f(x, beta))
    if not np.isfinite(val):
        raise NumericEvaluationError(
            f"f(x, beta) is not finite at x={x!r}, beta={beta!r}"
        )
    return val


def eval_grad(model: ModelSpec, x, beta) -> np.ndarray:
    """Evaluate the analytic parameter gradient at one point."""
    x, beta = _check_point(model, x, beta)
    grad = np.asarray(model.grad_f(x, beta), dtype=float)
    if grad.shape != (model.dim_beta,):
        raise NumericEvaluationError(
            f"grad_f must return shape ({model.dim_beta},), got {grad.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise NumericEvaluationError(
            f"grad f(x, beta) is not finite at x={x!r}, beta={beta!r}"
        )
    return grad


def check_gradient(model: ModelSpec, x, beta, step: float = 1e-6) -> float:
    """Largest relative gap between the analytic gradient and central
    finite differences of ``f``, component-wise.

    Requires ``beta`` to sit at least ``step`` inside the domain so the
    perturbed evaluations stay in-domain.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x, beta = _check_point(model, x, beta)
    if not model.domain.contains(beta, margin=step):
        raise ParameterDomainError(
            "beta must be interior to the domain by at least `step`"
        )
    analytic = eval_grad(model, x, beta)
    worst = 0.0
    for j in range(model.dim_beta):
        shift = np.zeros_like(beta)
        shift[j] = step
        fd = (eval_f(model, x, beta + shift) - eval_f(model, x, beta - shift)) / (2 * step)
        err = abs(analytic[j] - fd) / max(1.0, abs(analytic[j]))
        worst = max(worst, err)
    return worst


def f_values(model: ModelSpec, x_rows: np.ndarray, beta) -> np.ndarray:
    """Vectorized mean values over an ``(n, p)`` covariate stack."""
    vals = np.asarray(model.f(x_rows, beta), dtype=float)
    if vals.shape != (x_rows.shape[0],):
        raise NumericEvaluationError(
            f"batched f returned shape {vals.shape}, expected ({x_rows.shape[0]},)"
        )
    if not np.all(np.isfinite(vals)):
        raise NumericEvaluationError("batched f produced non-finite values")
    return vals


def grad_values(model: ModelSpec, x_rows: np.ndarray, beta) -> np.ndarray:
    """Vectorized gradient rows over an ``(n, p)`` covariate stack."""
    grads = np.asarray(model.grad_f(x_rows, beta), dtype=float)
    expected = (x_rows.shape[0], model.dim_beta)
    if grads.shape != expected:
        raise NumericEvaluationError(
            f"batched grad_f returned shape {grads.shape}, expected {expected}"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericEvaluationError("batched grad_f produced non-finite values")
    return grads


# --------------------------------------------------------------------------
# built-in models
# --------------------------------------------------------------------------

def _rp_f(x, beta):
    a, b = float(beta[0]), float(beta[1])
    xv = np.asarray(x, dtype=float)[..., 0]
    return a * (1.0 - xv**b) / b


def _rp_grad(x, beta):
    a, b = float(beta[0]), float(beta[1])
    xv = np.asarray(x, dtype=float)[..., 0]
    xb = xv**b
    # x^b * log(x) -> 0 as x -> 0+ for b > 0; encode the limit explicitly.
    safe = np.where(xv > 0.0, xv, 1.0)
    xb_logx = np.where(xv > 0.0, xb * np.log(safe), 0.0)
    da = (1.0 - xb) / b
    db = -a * xb_logx / b - a * (1.0 - xb) / b**2
    return np.stack([da, db], axis=-1)


def ratio_power() -> ModelSpec:
    """Scalar-covariate model ``f(x, (a, b)) = a (1 - x^b) / b`` on the
    box ``[-100, 100] x [0.1, 20]``."""
    return ModelSpec(
        name="ratio_power",
        dim_x=1,
        dim_beta=2,
        domain=ParamDomain(np.array([-100.0, 0.1]), np.array([100.0, 20.0])),
        f=_rp_f,
        grad_f=_rp_grad,
    )


def _lin_f(x, beta):
    return np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float)


def _lin_grad(x, beta):
    x = np.asarray(x, dtype=float)
    return x.copy()


def linear(dim: int, lower: float = -1e3, upper: float = 1e3) -> ModelSpec:
    """Linear reference model ``f(x, beta) = x @ beta`` with a configurable
    (finite) box; used as an exactly-solvable oracle in tests."""
    lo = np.full(dim, float(lower))
    hi = np.full(dim, float(upper))
    return ModelSpec(
        name="linear",
        dim_x=dim,
        dim_beta=dim,
        domain=ParamDomain(lo, hi),
        f=_lin_f,
        grad_f=_lin_grad,
    )


BUILTIN_MODELS = ("ratio_power", "linear")


def get_model(name: str, dim_x: int = 1) -> ModelSpec:
    """Resolve a built-in model by string id (CLI and config entry point)."""
    if name == "ratio_power":
        if dim_x != 1:
            raise ValueError("ratio_power is a scalar-covariate model (p=1)")
        return ratio_power()
    if name == "linear":
        return linear(dim_x)
    raise ValueError(f"unknown model {name!r}; built-ins: {BUILTIN_MODELS}")
