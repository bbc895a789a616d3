"""Limit laws of the sample autocovariance and their samplers.

* :func:`sample_stable` -- Chambers–Mallows–Stuck draws of ``S_alpha(tau, beta, mu)``
  in the Samorodnitsky–Taqqu parametrisation (characteristic function
  ``exp(-tau^a |x|^a (1 - i beta sign(x) tan(pi a / 2)) + i mu x)`` for ``a != 1``).
* :class:`RosenblattSampler` -- the second-order Wiener chaos variable
  ``U_d(1)`` as a Gaussian quadratic form.
* :func:`sample_integral_GdM` -- Riemann sums of ``int_0^1 G_h(s) dM_s`` with
  ``M_s = K_s - s alpha/(alpha-2)`` and ``K`` an ``alpha/2``-stable Lévy
  process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import special

from . import levy
from ._remote import remote_loadings
from .errors import DomainError, ParameterError
from .kernel import G as G_series, Indicator, Kernel, StepKernel, G_step
from .rng import make_rng

REGIMES = ("gaussian", "rosenblatt", "stable", "boundary")


# ---------------------------------------------------------------------------
# descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StableParams:
    """Parameters of ``int G_h dM`` with ``K_1 ~ S_{alpha/2}(tau, beta, mu)``."""

    alpha: float          # tail index of the driver; the stable index is alpha/2
    tau: float
    beta: float
    mu: float

    @property
    def alpha_half(self) -> float:
        return 0.5 * self.alpha

    @property
    def drift(self) -> float:
        return self.alpha / (self.alpha - 2.0)


@dataclass(frozen=True)
class LimitLaw:
    """Limit of the scaled vector ``(gamma_hat(h) - gamma(h))_{h=0..H}``.

    Exactly one of ``gaussian_cov``, ``rosenblatt`` and ``stable`` is set,
    except for ``regime == "boundary"`` where none is.

    Attributes
    ----------
    regime : str
        One of ``gaussian``, ``rosenblatt``, ``stable``, ``boundary``.
    scaling : str
        ``sqrt_n``, ``n_pow``, ``n_over_aN2`` or ``sqrt_n_over_log``.
    exponent : float or None
        Rate exponent for ``n_pow`` / ``sqrt_n`` scalings.
    rosenblatt : tuple (d, coefficient) or None
    stable : StableParams or None
    kernel : Kernel or None
        Kernel whose ``G_h`` enter the stable limit.
    """

    regime: str
    H: int
    scaling: Optional[str] = None
    exponent: Optional[float] = None
    gaussian_cov: Optional[np.ndarray] = None
    rosenblatt: Optional[tuple] = None
    stable: Optional[StableParams] = None
    kernel: Optional[Kernel] = None
    note: str = ""
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ParameterError(f"unknown regime {self.regime!r}")
        populated = sum(x is not None for x in (self.gaussian_cov, self.rosenblatt, self.stable))
        if self.regime == "boundary":
            if populated:
                raise ParameterError("a boundary law carries no limit parameters")
        elif populated != 1:
            raise ParameterError("exactly one limit must be populated")
        if self.stable is not None:
            s = self.stable
            if not (1 < s.alpha_half < 2 and -1 <= s.beta <= 1 and s.tau >= 0):
                raise ParameterError("stable limit needs alpha/2 in (1, 2), |beta| <= 1, tau >= 0")

    def sample(self, size: int, seed=None, lags: Optional[Sequence[int]] = None,
               n_grid: int = 1024, rosenblatt_sampler: Optional["RosenblattSampler"] = None):
        """Draw ``size`` vectors from the limit, shape ``(size, len(lags))``."""
        lags = list(range(self.H + 1)) if lags is None else list(lags)
        rng = make_rng(seed)
        if self.regime == "boundary":
            raise DomainError("no limit law is claimed at a regime boundary")
        if self.gaussian_cov is not None:
            V = self.gaussian_cov[np.ix_(lags, lags)]
            return rng.multivariate_normal(np.zeros(len(lags)), V, size=size, method="eigh")
        if self.rosenblatt is not None:
            d, coef = self.rosenblatt
            sampler = rosenblatt_sampler or RosenblattSampler(d, n_grid)
            u = sampler.sample(size, rng)
            return coef * np.repeat(u[:, None], len(lags), axis=1)
        s = self.stable
        return sample_integral_GdM(self.kernel, lags, s.alpha, s.tau, s.beta, s.mu,
                                   n_grid=n_grid, seed=rng, size=size)


# ---------------------------------------------------------------------------
# stable variables
# ---------------------------------------------------------------------------

def _check_stable(alpha, tau, beta):
    if not (0 < alpha <= 2):
        raise DomainError("alpha must lie in (0, 2]")
    if not (-1 <= beta <= 1):
        raise DomainError("beta must lie in [-1, 1]")
    if not tau >= 0:
        raise DomainError("tau must be nonnegative")


def sample_stable(alpha: float, tau: float = 1.0, beta: float = 0.0, mu: float = 0.0,
                  seed=None, size=None):
    """Draw from ``S_alpha(tau, beta, mu)``.

    Uses the Chambers–Mallows–Stuck transformation of ``V ~ U(-pi/2, pi/2)``
    and ``W ~ Exp(1)``.

    Returns
    -------
    float or ndarray
        A scalar when ``size`` is None.
    """
    _check_stable(alpha, tau, beta)
    rng = make_rng(seed)
    shape = () if size is None else size
    V = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, shape)
    W = rng.standard_exponential(shape)
    if alpha != 1.0:
        t = beta * math.tan(0.5 * math.pi * alpha)
        B = math.atan(t) / alpha
        S = (1.0 + t * t) ** (0.5 / alpha)
        X = (S * np.sin(alpha * (V + B)) / np.cos(V) ** (1.0 / alpha)
             * (np.cos(V - alpha * (V + B)) / W) ** ((1.0 - alpha) / alpha))
        out = tau * X + mu
    else:
        hp = 0.5 * math.pi
        X = (1.0 / hp) * ((hp + beta * V) * np.tan(V)
                          - beta * np.log(hp * W * np.cos(V) / (hp + beta * V)))
        out = tau * X + (beta * tau * math.log(tau) / hp if tau > 0 else 0.0) + mu
    return float(out) if size is None else out


def stable_constant(p: float) -> float:
    """``C_p = (1 - p) / (Gamma(2 - p) cos(pi p / 2))`` (``2/pi`` at ``p = 1``)."""
    if p == 1.0:
        return 2.0 / math.pi
    return (1.0 - p) / (special.gamma(2.0 - p) * math.cos(0.5 * math.pi * p))


def stable_limit_params(model: levy.LevyModel, epsilon: float = 1.0) -> StableParams:
    """Parameters of the stable limit of ``a_N^-2 sum_{t<=N} (L_t^2 - b_N)``.

    The squares have the one-sided tail ``N P[L^2 > a_N^2 x] -> x^(-alpha/2)``,
    so ``beta = 1`` and ``tau^(alpha/2) = 1 / C_{alpha/2}``.  The location is
    fixed by the fact that the ``sigma^2``-centred sums have mean zero and
    are uniformly integrable: the limit ``S(tau, 1, mu - alpha/(alpha-2))``
    must have mean zero, hence ``mu = alpha/(alpha-2)``.

    For increments over a step ``epsilon`` the parameters become
    ``(epsilon^(2/alpha) tau, beta, epsilon mu)``.
    """
    levy.ensure_heavy_tailed(model)
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    a = model.alpha
    p = 0.5 * a
    tau = stable_constant(p) ** (-1.0 / p)
    mu = a / (a - 2.0)
    return StableParams(a, epsilon ** (2.0 / a) * tau, 1.0, epsilon * mu)


@dataclass(frozen=True)
class StableCheck:
    """Monte Carlo cross-check of :func:`stable_limit_params`."""

    tau_ratio: float      # MC scale / analytic scale (via interquartile ranges)
    median_mc: float
    median_theory: float
    skewness_positive: bool
    ok: bool


def check_stable_params(model: levy.LevyModel, N: int = 10_000, reps: int = 2000,
                        seed=0, tolerance: float = 0.15) -> StableCheck:
    """Compare the analytic limit with simulated ``a_N^-2 sum (L_t^2 - sigma^2)``."""
    params = stable_limit_params(model)
    ns = levy.norming_sequences(model, N, seed=seed)
    s2 = levy.variance(model)
    rng = make_rng((0 if not isinstance(seed, int) else seed, 7))
    sums = np.empty(reps)
    for r in range(reps):
        x = levy.sample_increments(model, 1.0, N, rng)
        sums[r] = np.sum(x * x - s2) / ns.a_N ** 2
    ref = sample_stable(params.alpha_half, params.tau, 1.0, params.mu - params.drift,
                        seed=rng, size=100_000)
    iqr = lambda v: np.subtract(*np.percentile(v, [75, 25]))
    ratio = iqr(sums) / iqr(ref)
    med_mc, med_th = float(np.median(sums)), float(np.median(ref))
    skew_pos = float(np.mean(sums > np.median(sums) + iqr(sums))) > float(
        np.mean(sums < np.median(sums) - iqr(sums)))
    ok = abs(ratio - 1) <= tolerance and abs(med_mc - med_th) <= tolerance * iqr(ref)
    return StableCheck(float(ratio), med_mc, med_th, skew_pos, ok)


# ---------------------------------------------------------------------------
# Rosenblatt
# ---------------------------------------------------------------------------

def rosenblatt_variance(d: float) -> float:
    """Closed form ``Var U_d(1) = 4 B(d, 1-2d)^2 / ((4d - 1) 4d)`` for ``d`` in (1/4, 1/2)."""
    if not 0.25 < d < 0.5:
        raise DomainError("the Rosenblatt variance is finite only for d in (1/4, 1/2)")
    B = special.beta(d, 1.0 - 2.0 * d)
    return 4.0 * B * B / ((4.0 * d - 1.0) * 4.0 * d)


def rosenblatt_variance_quadrature(d: float, tol: float = 1e-10) -> float:
    """Variance of ``U_d(1)`` by numerical quadrature.

    Integrating out the common noise position gives
    ``E U^2 = 2 iint_{[0,1]^2} c(|v1 - v2|)^2 dv1 dv2`` with
    ``c(h) = int_0^inf u^(d-1) (u + h)^(d-1) du = h^(2d-1) c(1)``.  Both
    ``c(1)`` and the remaining one-dimensional integral
    ``2 int_0^1 (1 - h) h^(4d-2) dh`` are computed with adaptive quadrature
    (algebraic endpoint weights), independently of the beta-function form
    used by :func:`rosenblatt_variance`.
    """
    from scipy import integrate

    if not 0.25 < d < 0.5:
        raise DomainError("the Rosenblatt variable needs d in (1/4, 1/2)")
    f = lambda u: (u + 1.0) ** (d - 1.0)
    head, _ = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(d - 1.0, 0.0),
                             epsabs=0, epsrel=tol, limit=200)
    # u > 1: substitute u = 1/w
    g = lambda w: w ** (-2.0 * d) * (1.0 + w) ** (d - 1.0)
    tail, _ = integrate.quad(g, 0.0, 1.0, epsabs=0, epsrel=tol, limit=200)
    c1 = head + tail
    lag, _ = integrate.quad(lambda h: 1.0 - h, 0.0, 1.0, weight="alg",
                            wvar=(4.0 * d - 2.0, 0.0), epsabs=0, epsrel=tol)
    return 2.0 * c1 * c1 * 2.0 * lag


class RosenblattSampler:
    """Draws of ``U_d(T)`` from a Gaussian quadratic form.

    With observation times ``t = 1..n`` and unit noise cells, let

        Y_t = sum_k a_{t-k} zeta_k + R_t,
        a_j = int_j^{j+1} x^(d-1) dx = ((j+1)^d - j^d) / d,   j >= 0,

    where ``zeta_k`` are i.i.d. N(0,1) on the window ``k >= 1 - K_w`` and
    ``R_t`` represents the older noise by Gaussian factors.  Then

        Q = n^(-2d) sum_{t <= T n} (Y_t^2 - E Y_t^2)

    converges to ``U_d(T)``.  ``offdiagonal=True`` instead removes the
    squares ``zeta_k^2`` of each window variable (the strict off-diagonal
    form); both versions have mean zero.

    Parameters
    ----------
    d : float
        Memory parameter in (0, 1/2).
    n_grid : int
        Number of observation points (at least 64).
    window_factor : int
        ``K_w = window_factor * n_grid``.
    offdiagonal : bool
    remote : bool
        Include the Gaussian factors for noise older than the window.
    """

    def __init__(self, d: float, n_grid: int = 1024, window_factor: int = 32,
                 offdiagonal: bool = False, remote: bool = True):
        if not 0 < d < 0.5:
            raise ParameterError("d must lie in (0, 0.5)")
        if int(n_grid) != n_grid or n_grid < 64:
            raise ParameterError("n_grid must be an integer >= 64")
        self.d = float(d)
        self.n = int(n_grid)
        self.K_w = int(window_factor) * self.n
        self.offdiagonal = bool(offdiagonal)
        self.use_remote = bool(remote)

    @cached_property
    def coefficients(self) -> np.ndarray:
        j = np.arange(self.K_w + self.n, dtype=float)
        return ((j + 1.0) ** self.d - j ** self.d) / self.d

    @cached_property
    def remote(self):
        if not self.use_remote:
            return None
        taus = np.arange(1, self.n + 1) + float(self.K_w)
        return remote_loadings(lambda x: x ** (self.d - 1.0), taus, 1.0,
                               tail_constant=1.0, d=self.d)

    @cached_property
    def _plan(self):
        a = self.coefficients
        n_noise = self.K_w + self.n
        L = sfft.next_fast_len(n_noise + a.size - 1, real=True)
        return L, sfft.rfft(a, L)

    @cached_property
    def _mean_square(self) -> np.ndarray:
        """``E Y_t^2`` for ``t = 1..n`` (including the remote part)."""
        a2 = np.cumsum(self.coefficients ** 2)
        # Y_t uses noise k = 1-K_w..t, i.e. lags j = 0..t-1+K_w
        ms = a2[self.K_w + np.arange(self.n)]
        if self.remote is not None:
            ms = ms + self.remote.represented_variance
        return ms

    @cached_property
    def _diag_weights(self) -> np.ndarray:
        """``sum_t a_{t-k}^2`` for each window variable ``k`` (strict form)."""
        a2 = self.coefficients ** 2
        # noise index p = k - 1 + K_w, observation t at position K_w + t - 1
        c = np.convolve(a2[:self.n + self.K_w], np.ones(self.n))
        n_noise = self.K_w + self.n
        # weight for noise p: sum_{t=1..n} a2[K_w + t - 1 - p]
        q = self.K_w + self.n - 1 - np.arange(n_noise)
        return c[q]

    def tail_bound(self) -> float:
        """Per-observation variance of the noise not represented at all."""
        if self.remote is None:
            return float(np.max(((self.K_w + 1.0) ** (2 * self.d - 1)) / (1 - 2 * self.d)))
        return float(np.max(self.remote.residual_variance))

    def sample(self, size: int = 1, seed=None, horizon: float = 1.0, batch: int = 64) -> np.ndarray:
        """Draw ``size`` copies of ``U_d(horizon)`` (``horizon`` in (0, 1])."""
        if not 0 < horizon <= 1:
            raise ParameterError("horizon must lie in (0, 1]")
        rng = make_rng(seed)
        n_use = max(1, int(round(horizon * self.n)))
        L, af = self._plan
        n_noise = self.K_w + self.n
        pos = self.K_w + np.arange(n_use)
        scale = float(self.n) ** (-2.0 * self.d)
        out = np.empty(size)
        for start in range(0, size, batch):
            b = min(batch, size - start)
            zeta = rng.standard_normal((b, n_noise))
            y = sfft.irfft(sfft.rfft(zeta, L, axis=1) * af, L, axis=1)[:, pos]
            if self.remote is not None:
                xi = rng.standard_normal((self.remote.n_factors, b))
                y += (self.remote.loadings[:n_use] @ xi).T
            if self.offdiagonal:
                if n_use != self.n:
                    raise ParameterError("offdiagonal form is implemented for horizon = 1 only")
                q = np.sum(y * y, axis=1) - (zeta * zeta) @ self._diag_weights
                q -= np.sum(self._mean_square) - np.sum(self._diag_weights)
            else:
                q = np.sum(y * y, axis=1) - np.sum(self._mean_square[:n_use])
            out[start:start + b] = scale * q
        return out


def sample_rosenblatt(d: float, n_grid: int = 1024, seed=None, size=None, **options):
    """Draw from the Rosenblatt law ``U_d(1)``; see :class:`RosenblattSampler`."""
    sampler = RosenblattSampler(d, n_grid, **{k: v for k, v in options.items()
                                             if k in ("window_factor", "offdiagonal", "remote")})
    horizon = options.get("horizon", 1.0)
    draws = sampler.sample(1 if size is None else size, seed, horizon=horizon)
    return float(draws[0]) if size is None else draws


# ---------------------------------------------------------------------------
# stochastic integrals int G dM
# ---------------------------------------------------------------------------

def G_values(kernel, lags: Sequence[int], s: np.ndarray) -> np.ndarray:
    """``G_h(s)`` for each lag (rows) at the points ``s``; step kernels use ``G_{m,h}``."""
    if callable(kernel) and not isinstance(kernel, Kernel):
        return np.array([np.broadcast_to(np.asarray(kernel(h, s), dtype=float), s.shape)
                         for h in lags])
    if isinstance(kernel, StepKernel):
        return np.array([G_step(kernel.base, kernel.m, h, s) for h in lags])
    return np.array([G_series(kernel, h, s) for h in lags])


def sample_integral_GdM(kernel, h, alpha: float, tau: float, beta: float, mu: float,
                        n_grid: int = 512, seed=None, size=None):
    """Riemann-sum draws of ``int_0^1 G_h(s) dM_s``.

    ``M_s = K_s - s alpha/(alpha-2)`` with ``K_1 ~ S_{alpha/2}(tau, beta, mu)``.
    On each panel of width ``ds = 1/n_grid`` the increment of ``K`` is
    ``S_{alpha/2}(tau ds^(2/alpha), beta, mu ds)``; ``G_h`` is evaluated at
    the left end of the panel.

    Parameters
    ----------
    kernel : Kernel or callable
        Kernel whose periodic sums are integrated, or a callable
        ``G(h, s)`` returning the integrand directly.
    h : int or sequence of int
        Lag(s).  Several lags share the same driving increments.
    alpha : float
        Tail index of the Lévy driver, ``alpha/2`` in (1, 2).

    Returns
    -------
    float or ndarray
        Shape ``(size,)`` for a single lag, ``(size, len(h))`` for several.
    """
    p = 0.5 * alpha
    if not 1 < p < 2:
        raise DomainError("alpha/2 must lie in (1, 2)")
    _check_stable(p, tau, beta)
    if int(n_grid) != n_grid or n_grid < 1:
        raise ParameterError("n_grid must be a positive integer")
    lags = [int(h)] if np.ndim(h) == 0 else [int(x) for x in h]
    s = np.arange(n_grid) / n_grid
    Gv = G_values(kernel, lags, s)                 # (lags, n_grid)
    ds = 1.0 / n_grid
    rng = make_rng(seed)
    n = 1 if size is None else int(size)
    drift = alpha / (alpha - 2.0)
    out = np.empty((n, len(lags)))
    batch = max(1, 4_000_000 // n_grid)
    for start in range(0, n, batch):
        b = min(batch, n - start)
        dK = sample_stable(p, tau * ds ** (1.0 / p), beta, mu * ds, seed=rng, size=(b, n_grid))
        out[start:start + b] = dK @ Gv.T - drift * ds * Gv.sum(axis=1)
    if np.ndim(h) == 0:
        out = out[:, 0]
        return float(out[0]) if size is None else out
    return out[0] if size is None else out
