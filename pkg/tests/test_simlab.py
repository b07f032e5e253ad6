"""Monte-Carlo lab: error laws, generators, replication loops."""
import numpy as np
import pytest

from cpelt import (
    ErrorDistribution,
    ExperimentFailureError,
    SimConfig,
    generate_epidemic,
    generate_one_change,
    get_model,
    run_replications,
    sample_error,
    sample_errors,
)
from cpelt.model import f_values
from cpelt.simseed import child_seed, splitmix64


class TestErrorDistributions:
    @pytest.mark.parametrize("dist", list(ErrorDistribution))
    def test_standardized_moments(self, dist):
        draws = sample_errors(dist, np.random.default_rng(42), 100_000)
        assert abs(draws.mean()) <= 0.02
        assert abs(draws.var() - 1.0) <= 0.05

    def test_exponential_support_bound(self):
        draws = sample_errors(ErrorDistribution.EXPONENTIAL, np.random.default_rng(1), 200_000)
        assert np.all(draws > -1.0)

    def test_seeded_determinism(self):
        for dist in ErrorDistribution:
            first = sample_errors(dist, np.random.default_rng(7), 10)
            again = sample_errors(dist, np.random.default_rng(7), 10)
            assert np.array_equal(first, again)
            one_a = sample_error(dist, np.random.default_rng(7))
            one_b = sample_error(dist, np.random.default_rng(7))
            assert one_a == one_b


class TestGenerators:
    def test_mean_jump_matches_model_functions(self):
        cfg = SimConfig(n=1000, beta1=(10.0, 2.0), beta2=(7.0, 1.75), k0=600,
                        seed=5, noise_sd=0.0)
        data = generate_one_change(cfg, 0)
        model = get_model("ratio_power")
        x = cfg.design()
        mean1 = f_values(model, x, np.array([10.0, 2.0]))
        mean2 = f_values(model, x, np.array([7.0, 1.75]))
        assert data.y[599] == mean1[599]  # observation 600 (1-based)
        assert data.y[600] == mean2[600]  # observation 601
        assert np.array_equal(data.y[:600], mean1[:600])
        assert np.array_equal(data.y[600:], mean2[600:])

    def test_absent_change_gives_pure_baseline(self):
        cfg = SimConfig(n=300, beta1=(10.0, 2.0), seed=6)
        cfg_changed = SimConfig(n=300, beta1=(10.0, 2.0), beta2=(10.0, 2.0), k0=150, seed=6)
        a = generate_one_change(cfg, 3)
        b = generate_one_change(cfg_changed, 3)
        assert np.array_equal(a.y, b.y)

    def test_generator_determinism(self):
        cfg = SimConfig(n=200, beta1=(10.0, 2.0), beta2=(7.0, 1.75), k0=80, seed=9)
        a = generate_one_change(cfg, 4)
        b = generate_one_change(cfg, 4)
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
        c = generate_one_change(cfg, 5)
        assert not np.array_equal(a.y, c.y)

    def test_epidemic_degenerate_equals_h0(self):
        cfg_h2 = SimConfig(n=200, beta1=(10.0, 2.0), beta2=(7.0, 1.75), k1=90, k2=90,
                           scenario="epidemic", seed=10)
        cfg_h0 = SimConfig(n=200, beta1=(10.0, 2.0), scenario="epidemic", seed=10)
        assert np.array_equal(generate_epidemic(cfg_h2, 1).y, generate_epidemic(cfg_h0, 1).y)

    def test_epidemic_segment_means_exact(self):
        cfg = SimConfig(n=400, beta1=(10.0, 2.0), beta2=(7.0, 1.75), k1=100, k2=250,
                        scenario="epidemic", seed=11, noise_sd=0.0)
        data = generate_epidemic(cfg, 0)
        model = get_model("ratio_power")
        x = cfg.design()
        mean1 = f_values(model, x, np.array([10.0, 2.0]))
        mean2 = f_values(model, x, np.array([7.0, 1.75]))
        assert np.array_equal(data.y[:100], mean1[:100])
        assert np.array_equal(data.y[100:250], mean2[100:250])
        assert np.array_equal(data.y[250:], mean1[250:])

    def test_wrong_scenario_rejected(self):
        cfg = SimConfig(n=100, beta1=(10.0, 2.0), seed=1)
        with pytest.raises(ValueError):
            generate_epidemic(cfg, 0)

    def test_config_shape_validation(self):
        with pytest.raises(ValueError):
            SimConfig(n=100, beta1=(10.0, 2.0), k0=50, seed=0)  # change without beta2
        with pytest.raises(ValueError):
            SimConfig(n=100, beta1=(10.0, 2.0), k0=50, k1=10, k2=20, beta2=(7.0, 1.75))
        with pytest.raises(ValueError):
            SimConfig(n=100, beta1=(10.0, 2.0), scenario="epidemic", k1=30, k2=None,
                      beta2=(7.0, 1.75))
        with pytest.raises(ValueError):
            SimConfig(n=100, beta1=(10.0, 2.0), scenario="both")
        with pytest.raises(ValueError):
            SimConfig(n=100, beta1=(10.0, 2.0), beta2=(7.0,), k0=50)
        with pytest.raises(ValueError):
            SimConfig(n=100, beta1=(1.0, 2.0), model="linear")


class TestSeedDerivation:
    def test_splitmix_is_deterministic_and_spread(self):
        outs = {splitmix64(i) for i in range(1000)}
        assert len(outs) == 1000
        assert splitmix64(0) == splitmix64(0)

    def test_child_seeds_distinct(self):
        seeds = {child_seed(12345, r) for r in range(500)}
        assert len(seeds) == 500


class TestRunReplications:
    def test_report_fields_and_determinism(self):
        cfg = SimConfig(n=120, beta1=(10.0, 2.0), beta2=(6.0, 1.5), k0=60,
                        reps=8, seed=21, x_divisor=120.0)
        rep1 = run_replications(cfg, "el")
        rep2 = run_replications(cfg, "el")
        assert rep1.reps_done == 8
        assert 0.0 <= rep1.empirical_rate <= 1.0
        assert rep1.rejections == rep2.rejections
        assert rep1.per_rep == rep2.per_rep
        assert set(rep1.khat_summaries) == {"k"}
        stats = rep1.khat_summaries["k"]
        assert stats["min"] <= stats["median"] <= stats["max"]

    def test_h0_reports_no_khat_summary(self):
        cfg = SimConfig(n=120, beta1=(10.0, 2.0), reps=4, seed=22, x_divisor=120.0)
        rep = run_replications(cfg, "el")
        assert rep.khat_summaries == {}

    def test_parallel_matches_serial(self):
        cfg = SimConfig(n=80, beta1=(10.0, 2.0), beta2=(6.0, 1.5), k0=40,
                        reps=6, seed=23, x_divisor=80.0)
        serial = run_replications(cfg, "el", n_jobs=1)
        parallel = run_replications(cfg, "el", n_jobs=2)
        assert serial.per_rep == parallel.per_rep
        assert serial.rejections == parallel.rejections

    def test_noiseless_experiment_fails_loudly(self):
        cfg = SimConfig(n=60, beta1=(10.0, 2.0), reps=4, seed=24, noise_sd=0.0,
                        x_divisor=60.0)
        with pytest.raises(ExperimentFailureError):
            run_replications(cfg, "el")

    def test_unknown_detector(self):
        cfg = SimConfig(n=60, beta1=(10.0, 2.0), reps=2, seed=25)
        with pytest.raises(ValueError):
            run_replications(cfg, "cusum")

    def test_epidemic_detector_records_pairs(self):
        cfg = SimConfig(n=200, beta1=(10.0, 2.0), beta2=(6.0, 1.5), k1=80, k2=140,
                        scenario="epidemic", reps=3, seed=26, x_divisor=200.0,
                        bootstrap_reps=50)
        rep = run_replications(cfg, "epidemic")
        assert set(rep.khat_summaries) == {"k1", "k2"}
        assert rep.reps_done == 3

    def test_monotone_power_in_signal_gap(self):
        # same seeds, doubled parameter gap: rejection count cannot drop
        base = dict(n=240, beta1=(10.0, 2.0), k0=120, reps=30, seed=27,
                    x_divisor=240.0, noise_sd=6.0)
        small = SimConfig(beta2=(8.5, 1.875), **base)
        large = SimConfig(beta2=(7.0, 1.75), **base)
        r_small = run_replications(small, "el")
        r_large = run_replications(large, "el")
        assert r_large.rejections >= r_small.rejections
