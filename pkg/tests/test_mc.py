import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from lrdcma.errors import ConfigError, DomainError, NumericError, ParameterError
from lrdcma.estimate import theoretical_limits
from lrdcma.kernel import PowerLaw, StepKernel
from lrdcma.levy import LevyModel
from lrdcma.mc import (EmpiricalDistribution, ExperimentConfig, cross_lag_coupling,
                       hill_tail_index, ks_summary, ks_two_sample, moment_matched_gaussian,
                       quantile_matched, rate_regression, run_experiment, scale_factor,
                       simulate_statistics, sweep)
from lrdcma.simulate import SimulationGrid

BROWNIAN = LevyModel.brownian()


def small_config(**kw):
    grid = kw.pop("grid", SimulationGrid(2, 256, 1, K_trunc=2048))
    base = dict(kernel=PowerLaw(0.2), model=BROWNIAN, grid=grid, replicates=20, seed=7)
    base.update(kw)
    return ExperimentConfig(**base)


class TestKS:
    def test_identical(self):
        x = np.random.default_rng(0).standard_normal(100)
        assert ks_two_sample(x, x) == 0.0

    def test_disjoint(self):
        assert ks_two_sample([1, 2, 3], [10, 11]) == 1.0

    def test_hand_computed(self):
        assert ks_two_sample([1, 2, 3, 4], [1.5, 2.5]) == 0.5

    def test_against_scipy(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal(300), rng.standard_normal(170) + 0.2
        assert ks_two_sample(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-15)

    def test_empty(self):
        with pytest.raises(ParameterError):
            ks_two_sample([], [1.0])

    def test_summary(self):
        out = ks_summary([1, 2, 3, 4], {"a": np.array([1.5, 2.5]), "b": np.array([1, 2, 3, 4])})
        assert out == {"a": 0.5, "b": 0.0}


class TestHill:
    def test_pareto(self):
        x = np.random.default_rng(2).pareto(2.0, 1_000_000) + 1.0
        assert abs(hill_tail_index(x, 10_000) - 2.0) < 0.07

    def test_exponential_drifts(self):
        x = np.random.default_rng(3).standard_exponential(1_000_000)
        assert hill_tail_index(x, 100) > 1.5 * hill_tail_index(x, 10_000)

    def test_constant_sample(self):
        with pytest.raises(DomainError):
            hill_tail_index(np.ones(50), 10)

    @pytest.mark.parametrize("k", [0, 50, 2.5])
    def test_bad_k(self, k):
        with pytest.raises(ParameterError):
            hill_tail_index(np.arange(1.0, 51.0), k)


class TestRateRegression:
    def test_recovers_exponent(self):
        rng = np.random.default_rng(4)
        samples = {N: N ** -0.3 * rng.standard_normal(4000) for N in (256, 1024, 4096, 16384)}
        fit = rate_regression(samples)
        assert abs(fit.exponent - 0.3) < 3 * fit.stderr
        assert fit.ci[0] < 0.3 < fit.ci[1]
        assert 0 < fit.stderr < 0.05

    def test_stderr_calibrated(self):
        rng = np.random.default_rng(5)
        fits = [rate_regression({N: N ** -0.5 * rng.standard_normal(1000) for N in (100, 400, 1600)})
                for _ in range(200)]
        z = np.array([(f.exponent - 0.5) / f.stderr for f in fits])
        assert 0.75 < z.std() < 1.3

    def test_too_few_points(self):
        with pytest.raises(ParameterError):
            rate_regression({100: np.arange(5.0), 1000: np.arange(5.0)})

    def test_too_narrow(self):
        with pytest.raises(ParameterError):
            rate_regression({100: np.arange(5.0), 200: np.arange(5.0), 300: np.arange(5.0)})

    def test_degenerate(self):
        with pytest.raises(NumericError):
            rate_regression({100: np.ones(10), 400: np.arange(10.0), 1600: np.arange(10.0)})


class TestCrossLag:
    def test_single_lag(self):
        assert np.array_equal(cross_lag_coupling(np.arange(5.0)), [[1.0]])

    def test_gaussian_correlations(self):
        kernel, m = PowerLaw(0.15), 4
        grid = SimulationGrid(m, 4096, 2, K_trunc=m * 4096 * 16, remote="gaussian")
        cfg = ExperimentConfig(kernel, BROWNIAN, grid, replicates=400, scaling="sqrt_n",
                               lags=(0, 1, 2), seed=11)
        corr = cross_lag_coupling(run_experiment(cfg))
        V = theoretical_limits(StepKernel(kernel, m), BROWNIAN, H=2).gaussian_cov
        target = V / np.sqrt(np.outer(np.diag(V), np.diag(V)))
        assert np.max(np.abs(corr - target)) < 0.1


class TestRunExperiment:
    def test_length_and_sorted(self):
        res = run_experiment(small_config())
        assert isinstance(res, EmpiricalDistribution)
        assert res.R == 20
        assert np.all(np.diff(res.values) >= 0)
        assert res.per_lag.shape == (20, 1)

    def test_deterministic(self):
        assert run_experiment(small_config()) == run_experiment(small_config())

    def test_seed_changes_values(self):
        assert run_experiment(small_config()) != run_experiment(small_config(seed=8))

    def test_thread_invariance(self):
        a = run_experiment(small_config(threads=1))
        b = run_experiment(small_config(threads=3))
        assert np.array_equal(a.values, b.values)

    def test_common_random_numbers(self):
        one = simulate_statistics(small_config(lags=(0,)))
        two = simulate_statistics(small_config(lags=(0, 1)))
        assert np.array_equal(one[:, 0], two[:, 0])

    def test_unbiased_at_simulated_target(self):
        x = simulate_statistics(small_config(replicates=400), scaled=False)[:, 0]
        assert abs(x.mean()) < 4 * x.std(ddof=1) / math.sqrt(x.size)

    def test_boundary_refused(self):
        with pytest.raises(ConfigError, match="boundary"):
            small_config(kernel=PowerLaw(0.25))
        assert small_config(kernel=PowerLaw(0.25), allow_boundary=True).allow_boundary

    @pytest.mark.parametrize("kw", [dict(replicates=0), dict(scaling="n_pow"),
                                    dict(statistic="mean"), dict(lags=(0, 3)),
                                    dict(target="x"), dict(centering="x"),
                                    dict(statistic="diag_part",
                                         grid=SimulationGrid(2, 64, 0, 512, remote="gaussian"))])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            small_config(**kw)

    def test_all_problems_reported(self):
        with pytest.raises(ConfigError) as info:
            small_config(replicates=0, statistic="mean")
        assert len(info.value.problems) == 2

    def test_hash_depends_on_semantics(self):
        assert small_config().config_hash() == small_config(threads=2).config_hash()
        assert small_config().config_hash() != small_config(seed=1).config_hash()


class TestScaling:
    def test_factors(self):
        assert scale_factor(small_config(scaling="sqrt_n")) == 16.0
        assert scale_factor(small_config(scaling="n_pow", exponent=0.25)) == pytest.approx(4.0)
        assert scale_factor(small_config(scaling="sqrt_n_over_log")) == pytest.approx(
            math.sqrt(256 / math.log(256)))
        assert scale_factor(small_config()) == 1.0

    def test_scaled_is_multiple_of_raw(self):
        raw = simulate_statistics(small_config(), scaled=False)
        sc = simulate_statistics(small_config(scaling="sqrt_n"))
        assert np.allclose(sc, 16.0 * raw, rtol=0, atol=1e-12)


class TestReferences:
    def test_quantile_matched(self):
        rng = np.random.default_rng(6)
        ref, x = rng.standard_normal(5000), 3.0 + 2.0 * rng.standard_exponential(800)
        q = quantile_matched(ref, x)
        iqr = lambda v: np.subtract(*np.percentile(v, [75, 25]))
        assert np.median(q) == pytest.approx(np.median(x))
        assert iqr(q) == pytest.approx(iqr(x))

    def test_moment_matched(self):
        x = np.random.default_rng(7).standard_exponential(1000)
        g = moment_matched_gaussian(x, 200_000, seed=1)
        assert g.mean() == pytest.approx(x.mean(), abs=0.01)
        assert g.std() == pytest.approx(x.std(ddof=1), rel=0.01)


class TestSweep:
    def test_keys_and_truncation(self):
        cfg = small_config(replicates=5)
        out = sweep(cfg, [64, 128])
        assert sorted(out) == [64, 128]
        assert out[64].shape == (5, 1)
        K = math.ceil(2048 / (2 * 257) * 2 * 65)
        direct = simulate_statistics(replace(cfg, grid=replace(cfg.grid, N=64, K_trunc=K)),
                                     scaled=False)
        assert np.array_equal(direct, out[64])
