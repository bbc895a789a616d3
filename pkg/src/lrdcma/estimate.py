"""Sample autocovariances, the memory estimator and limit descriptors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from . import levy
from .errors import DomainError, ParameterError
from .kernel import (FlnIncrement, G as G_series, G_step, Indicator, Kernel, PowerLaw,
                     StepKernel, autocovariance)
from .limits import LimitLaw, StableParams, stable_limit_params

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class AcvEstimate:
    """Sample autocovariances at lags ``0..H`` from ``N`` summands."""

    gamma_hat: np.ndarray
    N: int
    gamma: Optional[np.ndarray] = None

    @property
    def H(self) -> int:
        return self.gamma_hat.size - 1

    @property
    def lags(self) -> np.ndarray:
        return np.arange(self.H + 1)


def _values(path) -> np.ndarray:
    vals = getattr(path, "values", path)
    return np.asarray(vals, dtype=float)


def sample_acv(path, H: int, N: Optional[int] = None, gamma=None) -> AcvEstimate:
    """``gamma_hat_N(h) = (1/N) sum_{t=1}^N X_t X_{t+h}`` for ``h = 0..H``.

    Parameters
    ----------
    path : SamplePath or array
        Holds at least ``N + H`` values.
    H : int
    N : int, optional
        Defaults to ``len(path) - H``.
    gamma : array, optional
        Theoretical values stored alongside.
    """
    x = _values(path)
    if int(H) != H or H < 0:
        raise ParameterError("H must be a nonnegative integer")
    H = int(H)
    if N is None:
        N = x.size - H
    if N < 1 or x.size < N + H:
        raise ParameterError(f"path of length {x.size} is too short for N={N}, H={H}")
    head = x[:N]
    gh = np.array([np.dot(head, x[h:h + N]) for h in range(H + 1)]) / N
    return AcvEstimate(gh, int(N), None if gamma is None else np.asarray(gamma, dtype=float))


def sample_acf(acv: AcvEstimate) -> np.ndarray:
    """``rho_hat(h) = gamma_hat(h) / gamma_hat(0)``."""
    g0 = acv.gamma_hat[0]
    if g0 == 0:
        raise DomainError("gamma_hat(0) = 0: the path is degenerate")
    return acv.gamma_hat / g0


@dataclass(frozen=True)
class DEstimate:
    value: float
    in_range: bool


def estimate_d(rho1: float, flagged: bool = False):
    """``d_hat = log(rho1 + 1) / (2 log 2)``, returned unclamped.

    With ``flagged=True`` a :class:`DEstimate` carrying an out-of-range
    flag (``d_hat`` outside (0, 1/2)) is returned.
    """
    rho1 = np.asarray(rho1, dtype=float)
    if np.any(rho1 <= -1) or np.any(np.isnan(rho1)):
        raise DomainError("rho1 must exceed -1")
    val = 0.5 * np.log1p(rho1) / math.log(2.0)
    if flagged:
        v = float(val)
        return DEstimate(v, 0 < v < 0.5)
    return float(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# autocovariance sequences
# ---------------------------------------------------------------------------

def acv_sequence(kernel: Kernel, sigma2: float, K: int) -> np.ndarray:
    """``gamma(0..K)`` using closed forms or lattice sums where available."""
    if isinstance(kernel, Indicator):
        g = np.zeros(K + 1)
        g[0] = sigma2
        return g
    k = np.arange(K + 1, dtype=float)
    if isinstance(kernel, PowerLaw):
        return sigma2 * kernel.C ** 2 * _powerlaw_acv(kernel.d, k)
    if isinstance(kernel, FlnIncrement):
        d = kernel.d
        g0 = autocovariance(kernel, sigma2, 0.0)
        e = 2 * d + 1
        return 0.5 * g0 * (np.abs(k + 1) ** e - 2 * k ** e + np.abs(k - 1) ** e)
    if isinstance(kernel, StepKernel):
        return _step_acv_sequence(kernel, sigma2, K)
    return np.array([autocovariance(kernel, sigma2, float(h)) for h in range(K + 1)])


def _powerlaw_acv(d: float, k: np.ndarray) -> np.ndarray:
    """``int f f(. + k)`` for the unit power-law kernel, ``k >= 0``."""
    out = np.empty_like(k)
    zero = k == 0
    out[zero] = 1.0 + 1.0 / (1.0 - 2.0 * d)
    kk = k[~zero]
    B = special.beta(d, 1.0 - 2.0 * d)
    # s in (0, 1]: f(s) = 1; f(s + k) = (s + k)^(d-1) for k >= 1, piecewise for k < 1
    head = np.where(kk >= 1, ((kk + 1) ** d - kk ** d) / d,
                    (1 - kk) + ((kk + 1) ** d - 1) / d)
    # s > 1: int_1^inf s^(d-1) (s+k)^(d-1) ds = k^(2d-1) int_{1/k}^inf v^(d-1)(1+v)^(d-1) dv
    x = 1.0 / kk
    inc = B * special.betainc(d, 1.0 - 2.0 * d, x / (1.0 + x))
    tail = kk ** (2 * d - 1) * (B - inc)
    out[~zero] = head + tail
    return out


def _step_acv_sequence(kernel: StepKernel, sigma2: float, K: int) -> np.ndarray:
    from scipy import fft as sfft

    m = kernel.m
    n = max(m * (K + 1) * 8, 1 << 20)
    taps = kernel.taps(n)
    L = sfft.next_fast_len(2 * n, real=True)
    F = sfft.rfft(taps, L)
    corr = sfft.irfft(F * np.conj(F), L)[: m * K + 1: m]
    # correlation of the truncated tap sequence misses pairs beyond n
    if kernel.long_memory:
        d, C = kernel.d, kernel.C_d
        h = np.arange(K + 1, dtype=float)
        eps = 1.0 / m
        # pairs (k, k + m h) with k + m h >= n are absent: tail over k >= n - m h
        x0 = eps * (n - m * h - 0.5) + 0.5 * h
        corr_tail = C ** 2 * x0 ** (2 * d - 1) / (1 - 2 * d) / eps
        corr = corr + corr_tail
    return sigma2 * corr / m


def gaussian_covariance(kernel: Kernel, model: levy.LevyModel, H: int, K_v: int = 1 << 16):
    """Limit covariance ``V`` of ``sqrt(N) (gamma_hat(h) - gamma(h))_{h<=H}``.

    ``v_pq = (eta - 3) sigma^4 int_0^1 G_p G_q + sum_k [gamma(k) gamma(k-p+q) + gamma(k+q) gamma(k-p)]``.

    The lag sum is evaluated exactly for ``|k| <= K_v``; beyond, ``gamma`` is
    continued by the two-term expansion ``c1 k^(2d-1) + c2 k^(d-1)`` fitted
    at ``K_v/4`` and ``K_v`` (the second term comes from the kernel's
    departure from a pure power near the origin and decays only like
    ``k^(-d)`` relative to the first) and summed with the Hurwitz zeta
    function.  Returns ``(V, tail)`` where ``tail`` is the extrapolated
    contribution to ``v_00`` (an error scale for the truncation).
    """
    d = kernel.d if kernel.long_memory else 0.0
    if kernel.long_memory and d >= 0.25:
        raise DomainError("the lag sum diverges for d >= 1/4")
    s2 = levy.variance(model)
    gam = acv_sequence(kernel, s2, K_v + H + 1)
    full = np.concatenate([gam[:0:-1], gam])  # lags -(K_v+H+1)..(K_v+H+1)
    off = gam.size - 1

    def g(idx):
        return full[idx + off]

    k = np.arange(-K_v, K_v + 1)
    V = np.empty((H + 1, H + 1))
    for p in range(H + 1):
        for q in range(H + 1):
            V[p, q] = np.sum(g(k) * g(k - p + q) + g(k + q) * g(k - p))
    tail = 0.0
    if kernel.long_memory:
        e1, e2 = 2 * d - 1, d - 1
        k0 = K_v // 4
        A = np.array([[k0 ** e1, k0 ** e2], [K_v ** e1, K_v ** e2]], dtype=float)
        c1, c2 = np.linalg.solve(A, [gam[k0], gam[K_v]])
        q = K_v + 1
        tail = 4.0 * (c1 * c1 * special.zeta(-2 * e1, q) + 2 * c1 * c2 * special.zeta(-(e1 + e2), q)
                      + c2 * c2 * special.zeta(-2 * e2, q))
        V = V + tail
    eta_ = levy.eta(model)
    if eta_ != 3.0:
        if not math.isfinite(eta_):
            raise DomainError("the Gaussian limit needs a finite fourth moment")
        Gi = _G_integrals(kernel, H)
        V = V + (eta_ - 3.0) * s2 * s2 * Gi
    return V, tail


def _G_integrals(kernel: Kernel, H: int) -> np.ndarray:
    """``int_0^1 G_p G_q ds`` for ``p, q <= H``."""
    if isinstance(kernel, StepKernel):
        s = np.arange(kernel.m) / kernel.m
        G = np.array([G_step(kernel.base, kernel.m, h, s) for h in range(H + 1)])
        return G @ G.T / kernel.m
    x, w = np.polynomial.legendre.leggauss(64)
    s = 0.5 * (x + 1.0)
    G = np.array([G_series(kernel, h, s, I_max=20_000) for h in range(H + 1)])
    return (G * (0.5 * w)) @ G.T


# ---------------------------------------------------------------------------
# regime classification
# ---------------------------------------------------------------------------

def classify_regime(d: float, model: levy.LevyModel) -> str:
    """Regime of ``gamma_hat`` for memory ``d`` and driver ``model``.

    Finite fourth moment: gaussian below ``d = 1/4``, rosenblatt above,
    boundary at ``1/4`` (for Brownian drivers the boundary has a Gaussian
    limit at rate ``sqrt(N / log N)``; see :func:`theoretical_limits`).
    Heavy tails (``alpha`` in (2, 4), pure jump): stable below ``1/alpha``,
    rosenblatt above, boundary at ``1/alpha``.
    """
    if model.has_finite_fourth_moment():
        if abs(d - 0.25) <= BOUNDARY_TOL:
            return "boundary"
        return "gaussian" if d < 0.25 else "rosenblatt"
    if not model.is_heavy_tailed_admissible():
        return "boundary"
    crit = 1.0 / model.alpha
    if abs(d - crit) <= BOUNDARY_TOL:
        return "boundary"
    return "stable" if d < crit else "rosenblatt"


def theoretical_limits(kernel: Kernel, model: levy.LevyModel, H: int = 0,
                       K_v: int = 1 << 16) -> LimitLaw:
    """Limit law of the scaled vector ``(gamma_hat(h) - gamma(h))_{h<=H}``.

    Returns
    -------
    LimitLaw
        ``gaussian``: covariance ``V`` at rate ``sqrt(N)``;
        ``rosenblatt``: ``C_d^2 sigma^2 U_d(1) (1, ..., 1)`` at rate ``N^(1-2d)``;
        ``stable``: ``(int G_h dM)_h`` at rate ``N / a_N^2``;
        ``boundary``: no law (except Brownian drivers at ``d = 1/4``, where
        the limit is ``2 C_d^2 sigma^2 Z (1, ..., 1)`` at rate ``sqrt(N / log N)``).
    """
    if not kernel.long_memory:
        raise DomainError("regime classification needs a long-memory kernel")
    d = kernel.d
    s2 = levy.variance(model)
    regime = classify_regime(d, model)
    C = kernel.C_d
    if regime == "gaussian":
        V, tail = gaussian_covariance(kernel, model, H, K_v)
        return LimitLaw("gaussian", H, "sqrt_n", 0.5, gaussian_cov=V,
                        diagnostics={"lag_sum_tail": tail, "K_v": K_v})
    if regime == "rosenblatt":
        return LimitLaw("rosenblatt", H, "n_pow", 1.0 - 2.0 * d,
                        rosenblatt=(d, C * C * s2))
    if regime == "stable":
        params = stable_limit_params(model)
        return LimitLaw("stable", H, "n_over_aN2", 1.0 - 2.0 / model.alpha,
                        stable=params, kernel=kernel)
    if model.is_brownian and abs(d - 0.25) <= BOUNDARY_TOL:
        c = 2.0 * C * C * s2
        V = np.full((H + 1, H + 1), c * c)
        return LimitLaw("gaussian", H, "sqrt_n_over_log", 0.5, gaussian_cov=V,
                        note="d = 1/4 with a Brownian driver")
    return LimitLaw("boundary", H, note="no limit law is claimed at this regime boundary")
