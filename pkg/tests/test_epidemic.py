"""Epidemic scan: pair statistic, brute-force equivalence, calibration."""
import numpy as np
import pytest

from cpelt import (
    DataSet,
    calibrate_threshold,
    epidemic_scan,
    epidemic_statistic,
    exact_epidemic_statistic,
    get_model,
    linear,
)
from cpelt.epidemic import default_epidemic_trim, epidemic_scan_statistics
from cpelt.estimation import ScoreVectors, fit_nls, score_vectors
from cpelt.simlab import SimConfig, generate_epidemic
from helpers import make_linear_data


def scores_from(g):
    g = np.asarray(g, dtype=float)
    prefix = np.vstack([np.zeros((1, g.shape[1])), np.cumsum(g, axis=0)])
    return ScoreVectors(g=g, prefix=prefix)


def brute_pair_statistic(g, k1, k2, sigma2, v):
    n = g.shape[0]
    outer = np.concatenate([g[:k1], g[k2:]])
    inner = g[k1:k2]
    diff = outer.mean(axis=0) - inner.mean(axis=0)
    theta = outer.shape[0] / n
    return n / sigma2 * theta * (1 - theta) * diff @ np.linalg.solve(v, diff)


class TestPairStatistic:
    def test_zero_rows(self):
        scores = scores_from(np.zeros((30, 2)))
        assert epidemic_statistic(scores, 10, 20, 30, 1.0, np.eye(2)) == 0.0

    def test_matches_brute_force_on_random_scores(self):
        rng = np.random.default_rng(0)
        g = rng.normal(size=(50, 2))
        scores = scores_from(g)
        v = np.array([[1.5, 0.2], [0.2, 0.8]])
        for k1, k2 in [(5, 12), (10, 40), (30, 47), (3, 48)]:
            val = epidemic_statistic(scores, k1, k2, 50, 0.9, v)
            assert val == pytest.approx(brute_pair_statistic(g, k1, k2, 0.9, v), abs=1e-10)

    def test_inner_segment_signal(self):
        # scores supported on the inner segment only
        g = np.zeros((40, 2))
        g[10:20] = [1.0, -0.5]
        scores = scores_from(g)
        val = epidemic_statistic(scores, 10, 20, 40, 1.0, np.eye(2))
        assert val == pytest.approx(brute_pair_statistic(g, 10, 20, 1.0, np.eye(2)), abs=1e-10)
        assert val > 0

    def test_segment_size_preconditions(self):
        scores = scores_from(np.zeros((20, 2)))
        with pytest.raises(ValueError):
            epidemic_statistic(scores, 5, 7, 20, 1.0, np.eye(2))  # inner < d+1
        with pytest.raises(ValueError):
            epidemic_statistic(scores, 0, 10, 20, 1.0, np.eye(2))

    def test_within_segment_permutation_invariance(self):
        rng = np.random.default_rng(1)
        g = rng.normal(size=(36, 2))
        k1, k2 = 9, 24
        base = epidemic_statistic(scores_from(g), k1, k2, 36, 1.0, np.eye(2))
        shuffled = g.copy()
        shuffled[:k1] = g[:k1][rng.permutation(k1)]
        shuffled[k1:k2] = g[k1:k2][rng.permutation(k2 - k1)]
        shuffled[k2:] = g[k2:][rng.permutation(36 - k2)]
        val = epidemic_statistic(scores_from(shuffled), k1, k2, 36, 1.0, np.eye(2))
        assert val == pytest.approx(base, abs=1e-10)


class TestPairScan:
    def test_matches_cubic_brute_force(self):
        rng = np.random.default_rng(2)
        for trial in range(3):
            n = 60 + 10 * trial
            g = rng.normal(size=(n, 2))
            scores = scores_from(g)
            v = np.array([[1.0, 0.1], [0.1, 0.6]])
            trim = default_epidemic_trim(n)
            best = (-1.0, None, None)
            for k1 in range(trim + 1, n - trim - 1):
                for k2 in range(k1 + 3, min(n - trim - 1, n + k1 - 3) + 1):
                    val = brute_pair_statistic(g, k1, k2, 1.1, v)
                    if val > best[0]:
                        best = (val, k1, k2)
            stat, k1_hat, k2_hat = epidemic_scan_statistics(scores, trim, trim, 1.1, v)
            assert stat == pytest.approx(best[0], abs=1e-10)
            assert (k1_hat, k2_hat) == (best[1], best[2])

    def test_flat_surface_selects_lexicographic_smallest(self):
        scores = scores_from(np.zeros((40, 2)))
        trim = 5
        stat, k1_hat, k2_hat = epidemic_scan_statistics(scores, trim, trim, 1.0, np.eye(2))
        assert stat == 0.0
        assert (k1_hat, k2_hat) == (trim + 1, trim + 1 + 3)  # first admissible pair

    def test_no_admissible_pairs(self):
        scores = scores_from(np.zeros((20, 2)))
        with pytest.raises(ValueError):
            epidemic_scan_statistics(scores, 9, 9, 1.0, np.eye(2))


@pytest.fixture(scope="module")
def fitted():
    cfg = SimConfig(n=300, beta1=(10.0, 2.0), scenario="epidemic", seed=42, x_divisor=300.0)
    data = generate_epidemic(cfg, 0)
    model = get_model("ratio_power")
    return data, model, fit_nls(data, model, np.array([10.0, 2.0]))


class TestCalibration:
    def test_minimum_replicates(self, fitted):
        data, model, fit = fitted
        with pytest.raises(ValueError):
            calibrate_threshold(fit, model, data.x, 0.05, B=10)

    def test_alpha_one_gives_bootstrap_minimum(self, fitted):
        data, model, fit = fitted
        t_min = calibrate_threshold(fit, model, data.x, 1.0, B=50, seed=5)
        t_05 = calibrate_threshold(fit, model, data.x, 0.05, B=50, seed=5)
        assert t_min <= t_05

    def test_seeded_determinism(self, fitted):
        data, model, fit = fitted
        a = calibrate_threshold(fit, model, data.x, 0.05, B=50, seed=7)
        b = calibrate_threshold(fit, model, data.x, 0.05, B=50, seed=7)
        assert a == b

    def test_threshold_monotone_in_alpha(self, fitted):
        data, model, fit = fitted
        levels = [0.5, 0.2, 0.1, 0.05, 0.02]
        thresholds = [
            calibrate_threshold(fit, model, data.x, a, B=60, seed=9) for a in levels
        ]
        assert all(t2 >= t1 for t1, t2 in zip(thresholds, thresholds[1:]))


class TestEpidemicScan:
    def test_detects_published_epidemic_scenario(self):
        cfg = SimConfig(
            n=1500, beta1=(10.0, 2.0), beta2=(7.0, 1.75), k1=400, k2=600,
            scenario="epidemic", seed=3,
        )
        data = generate_epidemic(cfg, 0)
        res = epidemic_scan(
            data, get_model("ratio_power"), bootstrap_reps=50, seed=1,
            init=np.array([10.0, 2.0]),
        )
        assert res.reject
        assert res.stat_max >= res.threshold
        assert abs(res.k1_hat - 400) <= 30 and abs(res.k2_hat - 600) <= 30

    def test_strong_signal_localization(self):
        # noise sd 0.1: the pair estimate lands within +-10 in >= 90% of runs
        model = get_model("ratio_power")
        hits = 0
        for rep in range(50):
            cfg = SimConfig(
                n=400, beta1=(10.0, 2.0), beta2=(7.0, 1.75), k1=120, k2=240,
                scenario="epidemic", seed=600 + rep, noise_sd=0.1, x_divisor=400.0,
            )
            data = generate_epidemic(cfg, 0)
            fit = fit_nls(data, model, np.array([10.0, 2.0]))
            scores = score_vectors(data, model, fit.beta_hat)
            trim = default_epidemic_trim(400)
            _, k1_hat, k2_hat = epidemic_scan_statistics(
                scores, trim, trim, fit.sigma2_hat, fit.v_hat
            )
            hits += abs(k1_hat - 120) <= 10 and abs(k2_hat - 240) <= 10
        assert hits >= 45

    def test_precomputed_threshold_skips_calibration(self):
        cfg = SimConfig(n=200, beta1=(10.0, 2.0), scenario="epidemic", seed=9,
                        x_divisor=200.0)
        data = generate_epidemic(cfg, 0)
        res = epidemic_scan(
            data, get_model("ratio_power"), threshold=1e9, init=np.array([10.0, 2.0]),
        )
        assert res.threshold == 1e9
        assert not res.reject

    def test_trim_leaves_enough_interior(self):
        data = make_linear_data(seed=8, n=30)
        with pytest.raises(ValueError):
            epidemic_scan(data, linear(2), trim=(14, 14), bootstrap_reps=50)


class TestExactEpidemic:
    def test_balanced_zero_score_data(self):
        n, k1, k2 = 40, 12, 28
        x = np.ones((n, 1))
        y = np.tile([1.0, -1.0], n // 2)  # zero-sum inside and outside
        state = exact_epidemic_statistic(
            DataSet(x=x, y=y), linear(1), k1, k2, init=np.array([0.0])
        )
        assert state.lam == pytest.approx([0.0], abs=1e-9)
        assert state.t_nk == pytest.approx(0.0, abs=1e-9)

    def test_tracks_pair_statistic_on_linear_instance(self):
        # fixed n=60 instance with a genuine departure on (30, 60]; the
        # solved statistic tracks the plug-in form at a balanced pair
        data = make_linear_data(seed=104, n=60, noise=0.5, jump=(0.6, 0.4), k0=30)
        model = linear(2)
        fit = fit_nls(data, model)
        scores = score_vectors(data, model, fit.beta_hat)
        stat = epidemic_statistic(scores, 20, 40, 60, fit.sigma2_hat, fit.v_hat)
        state = exact_epidemic_statistic(data, model, 20, 40)
        assert abs(state.t_nk - stat) <= 0.10 * max(1.0, stat)

    def test_solution_contract(self):
        data = make_linear_data(seed=104, n=60, noise=0.5, jump=(0.6, 0.4), k0=30)
        model = linear(2)
        state = exact_epidemic_statistic(data, model, 20, 40)
        assert state.score_norm <= 1e-6
        assert np.all(state.weights_p > 0) and np.all(state.weights_q > 0)
        assert state.weights_p.sum() == pytest.approx(1.0, abs=1e-8)
        assert state.weights_q.sum() == pytest.approx(1.0, abs=1e-8)
        assert state.weights_p.shape == (60 - 20,)   # outer segments
        assert state.weights_q.shape == (20,)        # inner segment

    def test_infeasible_instances_raise_documented_errors(self):
        # On some no-change instances the inner problem loses feasibility
        # along the solve path; the contract is a loud error, not a value.
        from cpelt.exceptions import NoSolutionError, NonConvergenceError

        model = linear(2)
        errors = 0
        for seed in range(100, 112):
            data = make_linear_data(seed=seed, n=60, noise=0.5)
            try:
                exact_epidemic_statistic(data, model, 20, 40)
            except (NoSolutionError, NonConvergenceError):
                errors += 1
        assert errors > 0

    def test_pair_preconditions(self):
        data = make_linear_data(seed=13, n=40)
        with pytest.raises(ValueError):
            exact_epidemic_statistic(data, linear(2), 10, 11)
