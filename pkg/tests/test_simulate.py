import math
from dataclasses import replace

import numpy as np
import pytest

from lrdcma import levy
from lrdcma.errors import ConfigError, ParameterError, StateError
from lrdcma.estimate import _step_acv_sequence, sample_acv
from lrdcma.kernel import FlnIncrement, Indicator, PowerLaw, StepKernel, autocovariance
from lrdcma.levy import LevyModel
from lrdcma.mc import ks_two_sample
from lrdcma.simulate import (SimulationGrid, Simulator, decompose, simulate_path,
                             truncation_report)

BROWNIAN = LevyModel.brownian()
HEAVY = LevyModel.pure_jump(rate=1.0, alpha=2.5)


def brute_force_values(kernel, grid, z):
    """X_t = sum_{k=0}^{K} f(eps k) Z_{mt-k}, looping over every term."""
    m, K = grid.m, grid.K_trunc
    out = []
    for t in range(1, grid.n_obs + 1):
        acc = 0.0
        for k in range(K + 1):
            acc += kernel(k / m) * z[K + m * (t - 1) - k]
        out.append(acc)
    return np.array(out)


class TestGrid:
    def test_defaults(self):
        g = SimulationGrid(4, 100, 3)
        assert g.K_trunc == 4 * 103
        assert g.eps == 0.25
        assert g.stream_length == 4 * 103 - 4 + 4 * 103 + 1

    def test_short_window_rejected(self):
        with pytest.raises(ConfigError, match="K_trunc"):
            SimulationGrid(4, 100, 0, K_trunc=399)

    def test_aggregated_errors(self):
        with pytest.raises(ConfigError) as info:
            SimulationGrid(0, -1, remote="exact")
        assert len(info.value.problems) == 3


class TestSimulatePath:
    def test_matches_brute_force(self):
        g = SimulationGrid(3, 10, 2, K_trunc=45, seed=1)
        path = simulate_path(PowerLaw(0.3), HEAVY, g)
        assert np.allclose(path.values, brute_force_values(PowerLaw(0.3), g, path.increments),
                           rtol=1e-12, atol=1e-12)

    def test_indicator_identity(self):
        g = SimulationGrid(1, 500, 0, seed=2)
        path = simulate_path(Indicator(), BROWNIAN, g)
        # f(0) = 0 and f(1) = 1: X_t is the increment over (t-1, t]
        z = path.increments
        expected = z[g.K_trunc - 1 + np.arange(g.n_obs)]
        assert np.array_equal(path.values, expected)
        assert sample_acv(path, 0).gamma_hat[0] == pytest.approx(np.mean(expected ** 2))

    def test_determinism(self):
        g = SimulationGrid(4, 64, 2, seed=5)
        a = simulate_path(PowerLaw(0.3), HEAVY, g).values
        b = simulate_path(PowerLaw(0.3), HEAVY, g).values
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("remote", ["none", "gaussian"])
    def test_fft_matches_direct(self, remote):
        g = SimulationGrid(4, 256, 3, seed=3, remote=remote)
        sim = Simulator(PowerLaw(0.35), BROWNIAN, g)
        rng = np.random.default_rng(0)
        z = sim.draw_increments(rng)
        xi = sim.draw_remote(rng)
        a = sim.values_from(z, xi, method="direct")
        b = sim.values_from(z, xi, method="fft")
        assert np.max(np.abs(a - b)) <= 1e-10 * np.max(np.abs(a))

    def test_reconstruct(self):
        g = SimulationGrid(2, 40, 1, seed=4, method="fft")
        path = simulate_path(FlnIncrement(0.3), BROWNIAN, g)
        assert np.allclose(path.reconstruct(), path.values, rtol=1e-10, atol=1e-12)

    def test_reconstruct_needs_increments(self):
        g = SimulationGrid(2, 40, retain_increments=False)
        with pytest.raises(StateError):
            simulate_path(PowerLaw(0.3), BROWNIAN, g).reconstruct()

    def test_budget_checked_before_sampling(self, monkeypatch):
        def fail(*args, **kwargs):
            raise AssertionError("sampling started")

        monkeypatch.setattr(levy, "sample_increments", fail)
        g = SimulationGrid(4, 100, truncation_budget=1e-3)
        with pytest.raises(ConfigError, match="truncation budget"):
            simulate_path(PowerLaw(0.3), BROWNIAN, g)

    def test_budget_satisfied(self):
        g = SimulationGrid(4, 100, K_trunc=4 * 10 ** 5, truncation_budget=0.03)
        assert Simulator(PowerLaw(0.3), BROWNIAN, g).neglected_variance()[0] < 0.03

    def test_remote_requires_brownian(self):
        with pytest.raises(ConfigError):
            Simulator(PowerLaw(0.3), HEAVY, SimulationGrid(4, 100, remote="gaussian"))

    def test_remote_mode_covers_the_past(self):
        sim = Simulator(PowerLaw(0.3), BROWNIAN, SimulationGrid(4, 64, remote="gaussian"))
        # what remains unrepresented is a tiny fraction of Var(X)
        var = autocovariance(StepKernel(PowerLaw(0.3), 4), 1.0, 0.0)
        assert np.max(sim.neglected_variance()) < 1e-3 * var


class TestSimulatedLaw:
    def test_expected_acv_against_lattice_sum(self):
        g = SimulationGrid(4, 50, 3, K_trunc=4000)
        sim = Simulator(PowerLaw(0.3), BROWNIAN, g)
        w = PowerLaw(0.3)(np.arange(4001) / 4)
        direct = [0.25 * np.sum(w[:4001 - 4 * h] * w[4 * h:]) for h in range(4)]
        assert np.allclose(sim.expected_acv(), direct, rtol=1e-12)

    def test_remote_mean_tends_to_step_acv(self):
        g = SimulationGrid(4, 64, 2, remote="gaussian")
        sim = Simulator(PowerLaw(0.3), BROWNIAN, g)
        exact = _step_acv_sequence(StepKernel(PowerLaw(0.3), 4), 1.0, 2)
        assert np.allclose(sim.expected_acv(), exact, rtol=1e-3)

    def test_step_acv_tends_to_kernel_acv(self):
        gaps = [abs(_step_acv_sequence(StepKernel(PowerLaw(0.3), m), 1.0, 0)[0] - 3.5)
                for m in (2, 8, 32)]
        assert gaps[0] > gaps[1] > gaps[2]
        # Euler-Maclaurin: the lattice sum eps sum_k f(eps k)^2 undershoots the
        # integral by eps f(1)^2 / 2 at the kink of f
        assert gaps[2] == pytest.approx(1 / 64, rel=0.05)

    def test_mean_of_gamma_hat(self):
        m, N, R = 8, 4096, 500
        sim = Simulator(PowerLaw(0.3), BROWNIAN, SimulationGrid(m, N, remote="gaussian"))
        vals = np.array([sample_acv(sim.sample((7, r)), 0).gamma_hat[0] for r in range(R)])
        target = sim.expected_acv(0)[0]
        assert abs(vals.mean() - target) < 3 * vals.std(ddof=1) / math.sqrt(R)
        # the simulated law approximates gamma(0) = 3.5 up to eps / 2
        assert target == pytest.approx(3.5 - 0.5 / m, abs=0.005)

    def test_stationarity(self):
        N, R = 16, 10_000
        sim = Simulator(PowerLaw(0.3), BROWNIAN, SimulationGrid(2, N, retain_increments=False))
        X = np.array([sim.sample((11, r)).values for r in range(R)])
        assert ks_two_sample(X[:, 0], X[:, N // 2]) <= 0.02

    def test_mesh_refinement(self):
        N, R, T = 128, 100, 128
        kern = PowerLaw(0.3)
        fine = 8
        diffs = {m: [] for m in (1, 2, 4)}
        for r in range(R):
            rng = np.random.default_rng((13, r))
            # increments of one Brownian path on mesh 1/8 over (-T, N]
            zf = rng.standard_normal(fine * (N + T)) * math.sqrt(1 / fine)
            est = {}
            for m in (1, 2, 4, 8):
                z = zf.reshape(-1, fine // m).sum(axis=1)
                sim = Simulator(kern, BROWNIAN, SimulationGrid(m, N, K_trunc=m * T))
                z = z[z.size - sim.grid.stream_length:]
                est[m] = sample_acv(sim.values_from(z), 0).gamma_hat[0]
            for m in (1, 2, 4):
                diffs[m].append(abs(est[m] - est[2 * m]))
        means = [np.mean(diffs[m]) for m in (1, 2, 4)]
        assert means[0] > means[1] > means[2]


class TestDecompose:
    def brute_force(self, path, h):
        """Diagonal and off-diagonal parts by explicit double loops over (k, k')."""
        g = path.grid
        m, K, N = g.m, g.K_trunc, g.N
        z = path.increments
        w = path.kernel.taps(K + 1)
        diag = off = 0.0
        for t in range(1, N + 1):
            p, q = K + m * (t - 1), K + m * (t - 1 + h)
            for k in range(K + 1):
                for k2 in range(K + 1):
                    i, j = p - k, q - k2
                    term = w[k] * w[k2] * z[i] * z[j]
                    if i == j:
                        diag += term
                    else:
                        off += term
        return diag / N, off / N

    def test_against_double_loop(self):
        g = SimulationGrid(2, 16, 2, K_trunc=64, seed=21)
        path = simulate_path(PowerLaw(0.3), HEAVY, g)
        for h in range(3):
            dec = decompose(path, h)
            diag, off = self.brute_force(path, h)
            assert dec.off_diagonal == pytest.approx(off, rel=1e-12, abs=1e-12)
            assert dec.diagonal + dec.centering == pytest.approx(diag, rel=1e-12)
            assert dec.diagonal + dec.off_diagonal + dec.centering == pytest.approx(dec.gamma_hat, rel=1e-10)

    def test_b_N_centering(self):
        g = SimulationGrid(2, 16, 0, K_trunc=64, seed=22)
        path = simulate_path(PowerLaw(0.3), HEAVY, g)
        a, b = decompose(path, 0), decompose(path, 0, b_N=3.0)
        assert a.off_diagonal == b.off_diagonal
        assert a.diagonal + a.centering == pytest.approx(b.diagonal + b.centering)
        assert b.centering / a.centering == pytest.approx(3.0 / 5.0)

    def test_indicator(self):
        g = SimulationGrid(1, 50, 3, seed=23)
        path = simulate_path(Indicator(), BROWNIAN, g)
        x = path.values
        for h in range(1, 4):
            dec = decompose(path, h)
            assert dec.diagonal + dec.centering == 0.0
            assert dec.off_diagonal == pytest.approx(np.mean(x[:50] * x[h:h + 50]))

    def test_off_diagonal_mean_zero(self):
        R = 10_000
        g = SimulationGrid(2, 8, 1, K_trunc=32)
        sim = Simulator(PowerLaw(0.3), BROWNIAN, g)
        r = np.array([decompose(sim.sample((31, i)), 1).off_diagonal for i in range(R)])
        assert abs(r.mean()) < 4 * r.std(ddof=1) / math.sqrt(R)

    def test_errors(self):
        g = SimulationGrid(2, 16, retain_increments=False)
        with pytest.raises(StateError):
            decompose(simulate_path(PowerLaw(0.3), BROWNIAN, g), 0)
        g2 = SimulationGrid(2, 16, remote="gaussian")
        with pytest.raises(StateError):
            decompose(simulate_path(PowerLaw(0.3), BROWNIAN, g2), 0)
        with pytest.raises(ParameterError):
            decompose(simulate_path(PowerLaw(0.3), BROWNIAN, SimulationGrid(2, 16)), 1)


class TestTruncationReport:
    def test_powerlaw_tail(self):
        rep = truncation_report(PowerLaw(0.3), 1e4)
        assert rep.l2_tail == pytest.approx(1e4 ** -0.4 / 0.4)
        assert rep.l2_tail == pytest.approx(0.0628, abs=5e-5)

    def test_indicator(self):
        assert truncation_report(Indicator(), 1.0).l2_tail == 0.0
        assert truncation_report(Indicator(), 5.0).l2_tail == 0.0

    def test_doubling(self):
        a = truncation_report(PowerLaw(0.3), 100.0).l2_tail
        b = truncation_report(PowerLaw(0.3), 200.0).l2_tail
        assert b / a == pytest.approx(2 ** (2 * 0.3 - 1))

    def test_bias_bound_holds(self):
        g = SimulationGrid(4, 50, 2)
        sim = Simulator(PowerLaw(0.3), BROWNIAN, g)
        rep = truncation_report(StepKernel(PowerLaw(0.3), 4), g)
        full = _step_acv_sequence(StepKernel(PowerLaw(0.3), 4), 1.0, 2)
        assert np.all(np.abs(full - sim.expected_acv()) <= rep.bias_bound_per_lag * 1.01)
