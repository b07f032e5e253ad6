"""Sup-F least-squares baseline."""
import dataclasses

import numpy as np
import pytest

from cpelt import BaselineUnavailableError, SUPF_CRITICAL, get_model, linear, sup_f
from cpelt.estimation import DataSet
from helpers import make_linear_data, make_ratio_power_data


class TestSupF:
    def test_exact_no_noise_data_uses_zero_convention(self):
        rng = np.random.default_rng(0)
        x = np.column_stack([np.ones(60), rng.normal(size=60)])
        data = DataSet(x=x, y=x @ np.array([1.0, 2.0]))
        res = sup_f(data, linear(2))
        assert res.f_max == 0.0
        assert not res.reject

    def test_detects_published_change_scenario(self):
        data = make_ratio_power_data(seed=1, n=1000, beta2=(7.0, 1.75), k0=600)
        res = sup_f(data, get_model("ratio_power"), init=np.array([10.0, 2.0]))
        assert res.reject
        assert res.f_max >= SUPF_CRITICAL
        assert abs(res.k_at_max - 600) <= 20

    def test_split_nesting_bound(self):
        # splitting a nested least-squares fit cannot worsen it beyond
        # solver tolerance when both warm-started segment fits converge
        from cpelt.estimation import fit_nls

        data = make_linear_data(seed=2, n=150, noise=0.8)
        model = linear(2)
        pooled = fit_nls(data, model)
        for k in (30, 75, 120):
            left = fit_nls(DataSet(x=data.x[:k], y=data.y[:k]), model, pooled.beta_hat)
            right = fit_nls(DataSet(x=data.x[k:], y=data.y[k:]), model, pooled.beta_hat)
            assert left.converged and right.converged
            ssr1 = left.final_sse + right.final_sse
            assert ssr1 <= pooled.final_sse * (1 + 1e-8)

    def test_f_statistics_nonnegative(self):
        data = make_linear_data(seed=3, n=120, noise=0.5)
        res = sup_f(data, linear(2))
        assert np.all(res.f_stats >= -1e-10)
        assert res.f_max == res.f_stats.max()
        assert res.reject == (res.f_max >= 12.85)

    def test_all_splits_failing_raises(self, monkeypatch):
        # force the segment fits (and only them) to report non-convergence
        import cpelt.lsbaseline as lsb

        data = make_linear_data(seed=4, n=60)
        real = lsb.fit_nls

        def failing_segments(d, model, init=None, **kw):
            fit = real(d, model, init, **kw)
            if d.n < data.n:
                return dataclasses.replace(fit, converged=False)
            return fit

        monkeypatch.setattr(lsb, "fit_nls", failing_segments)
        with pytest.raises(BaselineUnavailableError):
            lsb.sup_f(data, linear(2))

    def test_failed_splits_counted_not_fatal(self):
        # short left segments of the nonlinear model are weakly identified,
        # which is exactly the pathology the failure counter records
        data = make_ratio_power_data(seed=5, n=300, beta2=(7.0, 1.75), k0=150)
        res = sup_f(data, get_model("ratio_power"), init=np.array([10.0, 2.0]))
        assert res.per_k_failures >= 0
        assert res.ks.size + res.per_k_failures > 0
