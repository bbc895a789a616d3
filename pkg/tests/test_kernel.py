import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from lrdcma import kernel as K
from lrdcma.errors import ParameterError, UnsupportedConfigurationError
from lrdcma.kernel import FlnIncrement, Ficarma, Indicator, PowerLaw, StepKernel


def all_kernels():
    return [PowerLaw(0.3), PowerLaw(0.2, 2.0), FlnIncrement(0.3), Ficarma((1.0,), (1.0,), 0.3),
            Ficarma((3.0, 2.0), (1.0, 0.5), 0.2)]


class TestEval:
    def test_powerlaw_cases(self):
        f = PowerLaw(0.3, 1.0)
        assert f(-1.0) == 0.0
        assert f(0.0) == 0.0
        assert f(0.5) == 1.0
        assert f(1.0) == 1.0
        assert f(4.0) == pytest.approx(0.378929, abs=1e-6)

    def test_fln_formula(self):
        d = 0.3
        f = FlnIncrement(d)
        t = np.array([0.5, 1.0, 2.5, 7.0])
        expected = (t ** d - np.clip(t - 1, 0, None) ** d) / special.gamma(d + 1)
        assert np.allclose(f(t), expected, rtol=1e-13)

    def test_fln_large_t_is_stable(self):
        # direct differences lose all digits here; compare to the binomial series
        d, t = 0.35, 1e9
        series = (d * t ** (d - 1) + d * (1 - d) / 2 * t ** (d - 2)) / special.gamma(d + 1)
        assert FlnIncrement(d)(t) == pytest.approx(series, rel=1e-12)

    @pytest.mark.parametrize("kern", all_kernels(), ids=lambda k: k.describe()["variant"])
    def test_tail_constant(self, kern):
        t = 1e3
        assert kern(t) * t ** (1 - kern.d) / kern.C_d == pytest.approx(1.0, abs=0.01)

    def test_fln_tail_constant_value(self):
        assert FlnIncrement(0.3).C_d == pytest.approx(0.3 / special.gamma(1.3))

    @pytest.mark.parametrize("kern", all_kernels() + [Indicator()], ids=lambda k: k.describe()["variant"])
    def test_bounded(self, kern):
        ratio, bound = K.boundedness_certificate(kern, np.geomspace(1e-5, 1e4, 300))
        assert ratio <= bound

    @given(st.floats(min_value=-1e6, max_value=0.0))
    @settings(max_examples=50, deadline=None)
    def test_zero_on_nonpositive(self, t):
        for kern in (PowerLaw(0.3), FlnIncrement(0.4), Indicator(), StepKernel(PowerLaw(0.3), 4)):
            assert kern(t) == 0.0

    @pytest.mark.parametrize("d", [0.0, 0.5, 0.6, -0.1])
    def test_invalid_d(self, d):
        with pytest.raises(ParameterError, match=r"d must lie in \(0, 0.5\)"):
            PowerLaw(d)

    def test_step_kernel_is_left_endpoint(self):
        base = PowerLaw(0.3)
        sk = StepKernel(base, 4)
        assert sk(0.1) == 0.0            # [0, 1/4) maps to f(0) = 0
        assert sk(1.3) == base(1.25)
        assert np.array_equal(sk.taps(5), base(np.arange(5) / 4))


class TestCarma:
    def test_single_root(self):
        assert K.carma_kernel([1.0], [1.0], 1.0) == pytest.approx(0.367879, abs=1e-6)

    def test_two_roots_partial_fractions(self):
        t = np.linspace(0, 5, 11)
        g = K.carma_kernel([3.0, 2.0], [1.0], t)
        assert np.allclose(g, np.exp(-t) - np.exp(-2 * t), atol=1e-14)
        assert g[0] == pytest.approx(0.0, abs=1e-15)

    def test_against_state_space_ode(self):
        # g(t) = b^T exp(A t) e_p for the companion form of a(z)
        a, b = [2.0, 3.0, 1.5], [1.0, 0.5]
        p = len(a)
        A = np.zeros((p, p))
        A[:-1, 1:] = np.eye(p - 1)
        A[-1] = -np.array(a[::-1])
        bvec = np.zeros(p)
        bvec[:len(b)] = b
        e = np.zeros(p)
        e[-1] = 1.0
        sol = integrate.solve_ivp(lambda t, y: A @ y, (0, 4), e, t_eval=[0.5, 1.0, 4.0],
                                  rtol=1e-11, atol=1e-13)
        assert np.allclose(K.carma_kernel(a, b, sol.t), bvec @ sol.y, atol=1e-9)

    def test_initial_value_identities(self):
        assert K.carma_kernel([3.0, 2.0], [1.0], 0.0) == pytest.approx(0.0, abs=1e-14)
        assert K.carma_kernel([3.0, 2.0], [1.0, 0.7], 0.0) == pytest.approx(0.7)
        assert K.carma_kernel([6.0, 11.0, 6.0], [1.0, 2.0, -0.4], 0.0) == pytest.approx(-0.4)

    def test_repeated_roots_rejected(self):
        with pytest.raises(UnsupportedConfigurationError):
            K.carma_kernel([2.0, 1.0], [1.0], 1.0)

    def test_unstable_rejected(self):
        with pytest.raises(ParameterError):
            K.carma_kernel([-1.0], [1.0], 1.0)

    def test_degree_and_b0(self):
        with pytest.raises(ParameterError):
            Ficarma((1.0,), (1.0, 1.0), 0.3)
        with pytest.raises(ParameterError):
            Ficarma((3.0, 2.0), (0.0, 1.0), 0.3)


def riemann_ficarma(kern: Ficarma, t: float, panels: int) -> float:
    """Panel sum with exact weights for the u^(d-1) singularity and midpoint g."""
    u = np.linspace(0.0, t, panels + 1)
    w = (u[1:] ** kern.d - u[:-1] ** kern.d) / kern.d
    mid = 0.5 * (u[1:] + u[:-1])
    return float(np.sum(kern.g(t - mid) * w) / special.gamma(kern.d))


class TestFicarma:
    def test_against_brute_force(self):
        kern = Ficarma((1.0,), (1.0,), 0.3)
        assert K.ficarma_eval(kern, 1.0) == pytest.approx(riemann_ficarma(kern, 1.0, 10 ** 6), rel=1e-6)

    def test_against_brute_force_two_roots(self):
        kern = Ficarma((3.0, 2.0), (1.0, 0.5), 0.2)
        for t in (0.3, 2.0):
            assert K.ficarma_eval(kern, t) == pytest.approx(riemann_ficarma(kern, t, 10 ** 6), rel=1e-6)

    def test_closed_form_single_root(self):
        # g = exp(-t): f(t) = exp(-t) t^d gamma*(d, -t) = t^d e^{-t} 1F1(d; d+1; t) / Gamma(d+1)
        d, t = 0.3, 1.7
        kern = Ficarma((1.0,), (1.0,), d)
        exact = t ** d * math.exp(-t) * special.hyp1f1(d, d + 1, t) / special.gamma(d + 1)
        assert kern(t) == pytest.approx(exact, rel=1e-9)

    def test_tail_asymptote(self):
        kern = Ficarma((1.0,), (1.0,), 0.3)
        t = 1e3
        assert kern(t) * t ** 0.7 * special.gamma(0.3) == pytest.approx(1.0, abs=0.01)

    def test_vanishes_at_zero(self):
        # small-t behaviour: f(t) ~ g(0) t^d / Gamma(d + 1) -> 0
        kern = Ficarma((1.0,), (1.0,), 0.3)
        t = np.array([1e-2, 1e-4, 1e-6, 1e-8])
        vals = kern(t)
        assert np.all(np.diff(vals) < 0)
        assert np.allclose(vals / (t ** 0.3 / special.gamma(1.3)), 1.0, atol=0.02)

    def test_invalid_t(self):
        with pytest.raises(ParameterError):
            K.ficarma_eval(Ficarma((1.0,), (1.0,), 0.3), 0.0)


class TestAutocovariance:
    def test_indicator(self):
        ind = Indicator()
        assert K.autocovariance(ind, 2.0, 0.0) == pytest.approx(2.0)
        for h in (1.0, 1.5, 3.0):
            assert K.autocovariance(ind, 2.0, h) == 0.0

    def test_powerlaw_closed_form(self):
        assert K.autocovariance(PowerLaw(0.3), 1.0, 0.0) == pytest.approx(3.5, rel=1e-8)

    def test_powerlaw_lag_against_direct_quadrature(self):
        f = PowerLaw(0.3)
        h = 2.5
        head = integrate.quad(lambda s: f(s) * f(s + h), 0, 1)[0]
        tail = integrate.quad(lambda s: f(s) * f(s + h), 1, np.inf, limit=500)[0]
        assert K.autocovariance(f, 1.0, h) == pytest.approx(head + tail, rel=1e-6)

    @pytest.mark.parametrize("kern", all_kernels()[:3], ids=str)
    def test_bounded_by_variance_and_psd(self, kern):
        g = K.acv_vector(kern, 1.0, 8)
        assert np.all(g <= g[0] * (1 + 1e-12))
        T = g[np.abs(np.subtract.outer(np.arange(9), np.arange(9)))]
        assert np.linalg.eigvalsh(T).min() >= -1e-8 * g[0]

    def test_ficarma_against_kernel_quadrature(self):
        kern = Ficarma((1.0,), (1.0,), 0.2)
        t = np.geomspace(1e-6, 1e6, 800)
        ft = kern(t)
        # trapezoid on a log grid plus the algebraic tail beyond 1e6
        num = np.trapezoid(ft * ft * t, np.log(t)) + kern.C_d ** 2 * 1e6 ** (2 * 0.2 - 1) / (1 - 0.4)
        assert K.autocovariance(kern, 1.0, 0.0) == pytest.approx(num, rel=1e-3)

    def test_return_error(self):
        val, err = K.autocovariance(PowerLaw(0.3), 1.0, 1.0, return_error=True)
        assert err >= 0 and err < 1e-6 * val

    def test_tail_l2(self):
        assert K.tail_l2(PowerLaw(0.3), 1e4) == pytest.approx(1e4 ** -0.4 / 0.4)
        assert K.tail_l2(Indicator(), 1.0) == 0.0
        assert K.tail_l2(PowerLaw(0.3), 2e4) / K.tail_l2(PowerLaw(0.3), 1e4) == pytest.approx(2 ** -0.4)

    def test_tail_l2_quadrature_branch(self):
        f = FlnIncrement(0.3)
        direct = integrate.quad(lambda s: f(s) ** 2, 50, 5e4, limit=500)[0] \
            + f.C_d ** 2 * 5e4 ** -0.4 / 0.4
        assert K.tail_l2(f, 50.0) == pytest.approx(direct, rel=1e-4)


class TestG:
    def test_indicator(self):
        s = np.linspace(0.01, 1.0, 7)
        assert np.allclose(K.G(Indicator(), 0, s), 1.0)
        assert np.allclose(K.G(Indicator(), 1, s), 0.0)

    @pytest.mark.parametrize("h", [0, 1, 3])
    def test_integral_is_acv(self, h):
        f = PowerLaw(0.3)
        x, w = np.polynomial.legendre.leggauss(40)
        # G_h has kinks at s where i + s or i + h + s crosses 1; split at none needed
        # for integer h, but use many nodes on each half for safety
        total = 0.0
        for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
            s = lo + (hi - lo) * (x + 1) / 2
            total += (hi - lo) / 2 * np.sum(w * K.G(f, h, s, I_max=20_000))
        assert total == pytest.approx(K.autocovariance(f, 1.0, float(h)), rel=1e-4)

    def test_tail_correction_converges(self):
        f = PowerLaw(0.3)
        s = np.array([0.25, 0.75])
        a = K.G(f, 0, s, I_max=1_000)
        b = K.G(f, 0, s, I_max=100_000)
        assert np.allclose(a, b, rtol=1e-5)

    def test_bound_reported(self):
        f = PowerLaw(0.3)
        res = K.G(f, 0, 0.5, I_max=1000, with_bound=True)
        assert res.tail_bound == pytest.approx(1000 ** -0.4 / 0.4)

    def test_global_bound(self):
        f = PowerLaw(0.3)
        s = np.linspace(0, 1, 65)
        bound = f.bound_K ** 2 * (1 + special.zeta(2 - 2 * 0.3))
        assert np.all(K.G(f, 0, s) <= bound)

    def test_step_version_converges(self):
        f = PowerLaw(0.3)
        s = (np.arange(128) + 0.5) / 128
        g0 = K.G(f, 0, s, I_max=20_000)
        l1, sup_away = [], []
        for m in (2, 8, 32):
            gm = K.G_step(f, m, 0, s, I_max=20_000)
            l1.append(np.mean(np.abs(gm - g0)))
            sup_away.append(np.max(np.abs(gm - g0)[s >= 0.5]))
        assert l1[0] > l1[1] > l1[2]
        assert sup_away[0] > sup_away[1] > sup_away[2]

    def test_step_first_cell_gap(self):
        # G_{m,0} on [0, 1/m) misses f(s)^2 = 1 because f_m vanishes on [0, eps)
        f = PowerLaw(0.3)
        s = np.array([0.001])
        for m in (2, 8, 32):
            gap = K.G(f, 0, s, I_max=20_000) - K.G_step(f, m, 0, s, I_max=20_000)
            assert gap[0] == pytest.approx(1.0, abs=0.02)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            K.G(PowerLaw(0.3), -1, 0.5)
        with pytest.raises(ParameterError):
            K.G(PowerLaw(0.3), 0, 1.5)


class TestFactory:
    def test_make_kernel(self):
        assert isinstance(K.make_kernel("power_law", 0.3), PowerLaw)
        assert isinstance(K.make_kernel("fln", 0.3), FlnIncrement)
        assert isinstance(K.make_kernel("ficarma", 0.3, a=[1.0], b=[1.0]), Ficarma)
        with pytest.raises(ParameterError):
            K.make_kernel("ficarma", 0.3)
        with pytest.raises(ParameterError):
            K.make_kernel("spline", 0.3)
