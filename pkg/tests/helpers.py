"""Small dataset builders shared across test modules."""
from __future__ import annotations

import numpy as np

from cpelt import DataSet, get_model
from cpelt.model import f_values


def make_linear_data(seed, n=200, beta=(1.0, 2.0), noise=0.5, jump=None, k0=None):
    """Linear-model dataset with intercept plus one random covariate."""
    rng = np.random.default_rng(seed)
    x = np.column_stack([np.ones(n), rng.normal(size=n)])
    beta = np.asarray(beta, dtype=float)
    mean = x @ beta
    if jump is not None:
        beta2 = beta + np.asarray(jump, dtype=float)
        idx = np.arange(1, n + 1)
        mean = np.where(idx <= k0, mean, x @ beta2)
    return DataSet(x=x, y=mean + noise * rng.standard_normal(n))


def make_ratio_power_data(seed, n=1000, beta1=(10.0, 2.0), beta2=None, k0=None,
                          noise=1.0, divisor=1000.0):
    """Fixed-design dataset for the built-in nonlinear model."""
    rng = np.random.default_rng(seed)
    model = get_model("ratio_power")
    x = (np.arange(1, n + 1) / divisor)[:, None]
    mean = f_values(model, x, np.asarray(beta1, dtype=float))
    if k0 is not None:
        mean2 = f_values(model, x, np.asarray(beta2, dtype=float))
        mean = np.where(np.arange(1, n + 1) <= k0, mean, mean2)
    return DataSet(x=x, y=mean + noise * rng.standard_normal(n))
