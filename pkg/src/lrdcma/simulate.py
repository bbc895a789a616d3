"""Discretised moving-average paths ``X_t = sum_k f(eps k) Z_{m t - k}``.

One increment stream ``Z`` (increments of ``L`` over steps of length
``eps = 1/m``) drives every observation time ``t = 1..N+H``.  Two ways of
treating the past are offered:

``remote="none"``
    Fixed window: ``X_t = sum_{k=0}^{K} f(eps k) Z_{mt-k}`` with
    ``K = K_trunc``.  The path is exactly stationary and the increments
    reconstruct it bitwise; required for :func:`decompose`.
``remote="gaussian"`` (Brownian drivers only)
    Every observation uses all increments of the stream, and the part of
    the stochastic integral older than the stream is represented by a
    finite set of Gaussian factors (see :mod:`lrdcma._remote`).  This
    removes the slowly decaying truncation bias of long-memory kernels.

The direct sliding dot product is the reference computation; an FFT
convolution is used for large sizes and agrees to rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import fft as sfft

from . import levy
from ._remote import remote_loadings
from .errors import ConfigError, ParameterError, StateError
from .kernel import Indicator, Kernel, StepKernel, tail_l2
from .levy import LevyModel
from .rng import make_rng

REMOTE_MODES = ("none", "gaussian")


@dataclass(frozen=True)
class SimulationGrid:
    """Discretisation and horizon.

    Parameters
    ----------
    m : int
        Mesh; increments are taken over steps ``eps = 1/m``.
    N : int
        Number of observations entering the estimator.
    H : int
        Largest lag; the path holds ``N + H`` values.
    K_trunc : int, optional
        Number of kernel taps in ``eps`` steps.  Defaults to the smallest
        admissible value ``m (N + H)``.
    seed : seed-like
    retain_increments : bool
        Keep the increment stream on the returned path.
    remote : {"none", "gaussian"}
        Treatment of the past beyond the stream.
    truncation_budget : float, optional
        Upper bound for the neglected variance ``sigma^2 int_{eps K}^inf f^2``
        (the represented remainder in ``"gaussian"`` mode).
    method : {"auto", "direct", "fft"}
    """

    m: int
    N: int
    H: int = 0
    K_trunc: Optional[int] = None
    seed: object = 0
    retain_increments: bool = True
    remote: str = "none"
    truncation_budget: Optional[float] = None
    method: str = "auto"

    def __post_init__(self):
        problems = []
        for name in ("m", "N"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and v >= 1):
                problems.append(f"{name} must be a positive integer")
        if not (isinstance(self.H, (int, np.integer)) and self.H >= 0):
            problems.append("H must be a nonnegative integer")
        if self.remote not in REMOTE_MODES:
            problems.append(f"remote must be one of {REMOTE_MODES}")
        if self.method not in ("auto", "direct", "fft"):
            problems.append("method must be auto, direct or fft")
        if not problems:
            if self.K_trunc is None:
                object.__setattr__(self, "K_trunc", int(self.m * (self.N + self.H)))
            elif not (isinstance(self.K_trunc, (int, np.integer)) and self.K_trunc >= 0):
                problems.append("K_trunc must be a nonnegative integer")
            elif self.K_trunc < self.m * (self.N + self.H):
                problems.append("K_trunc must satisfy eps*K_trunc >= N + H")
        if problems:
            raise ConfigError(problems)

    @property
    def eps(self) -> float:
        return 1.0 / self.m

    @property
    def n_obs(self) -> int:
        return self.N + self.H

    @property
    def stream_length(self) -> int:
        """Increments ``Z_i`` for ``i = m - K .. m (N + H)``."""
        return self.m * self.n_obs - self.m + self.K_trunc + 1


@dataclass(frozen=True)
class SamplePath:
    """Observations ``X_1..X_{N+H}`` and (optionally) their increments."""

    values: np.ndarray
    grid: SimulationGrid
    kernel: Kernel
    model: LevyModel
    increments: Optional[np.ndarray] = None
    remote_factors: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return self.grid.N

    def reconstruct(self) -> np.ndarray:
        """Recompute the values from the retained increments (direct sum)."""
        if self.increments is None:
            raise StateError("increments were not retained")
        sim = Simulator(self.kernel, self.model, replace(self.grid, method="direct"))
        return sim.values_from(self.increments, self.remote_factors)


def _base_kernel(kernel: Kernel, m: int) -> Kernel:
    if isinstance(kernel, StepKernel):
        if kernel.m != m:
            raise ConfigError(f"step kernel mesh {kernel.m} differs from grid mesh {m}")
        return kernel.base
    return kernel


class Simulator:
    """Reusable path generator for one (kernel, model, grid) triple.

    The kernel taps, their Fourier transform and the remote-past loadings
    are computed once; :meth:`sample` then costs one increment stream and
    one convolution.
    """

    def __init__(self, kernel: Kernel, model: LevyModel, grid: SimulationGrid):
        self.base = _base_kernel(kernel, grid.m)
        self.kernel = StepKernel(self.base, grid.m)
        self.model = model
        self.grid = grid
        self.sigma2 = levy.variance(model)
        if grid.remote == "gaussian" and model.has_jumps:
            raise ConfigError("remote='gaussian' requires a Brownian driver")
        budget = grid.truncation_budget
        if budget is not None:
            neglected = self.neglected_variance()
            if np.max(neglected) > budget:
                raise ConfigError(
                    f"truncation budget violated: neglected variance {np.max(neglected):.4g} "
                    f"exceeds {budget:.4g}; increase K_trunc")

    # -- static structure ---------------------------------------------------
    @cached_property
    def n_taps(self) -> int:
        g = self.grid
        return g.stream_length if g.remote == "gaussian" else g.K_trunc + 1

    @cached_property
    def taps(self) -> np.ndarray:
        """``w_k = f(eps k)`` for ``k = 0..n_taps-1``."""
        return self.kernel.taps(self.n_taps)

    @cached_property
    def positions(self) -> np.ndarray:
        """Stream index of ``Z_{mt}`` for ``t = 1..N+H``."""
        g = self.grid
        return g.K_trunc + g.m * np.arange(g.n_obs)

    @cached_property
    def remote(self):
        """Loadings of the Gaussian remote past (``None`` in fixed-window mode)."""
        g = self.grid
        if g.remote != "gaussian":
            return None
        taus = np.arange(g.n_obs) + g.eps * (g.K_trunc + 1)
        return remote_loadings(self.base, taus, math.sqrt(self.sigma2),
                               tail_constant=self.base.C_d if self.base.long_memory else 0.0,
                               d=self.base.d if self.base.long_memory else 0.25)

    def neglected_variance(self) -> np.ndarray:
        """Per-observation variance of ``X`` not produced by the simulation."""
        g = self.grid
        if g.remote == "gaussian":
            return self.remote.residual_variance
        return np.array([self.sigma2 * tail_l2(self.kernel, g.eps * (g.K_trunc + 1))])

    @cached_property
    def _use_fft(self) -> bool:
        g = self.grid
        if g.method != "auto":
            return g.method == "fft"
        return g.n_obs * self.n_taps > 4_000_000

    @cached_property
    def _fft_plan(self):
        g = self.grid
        S = g.stream_length
        L = sfft.next_fast_len(S + self.n_taps - 1 - g.K_trunc, real=True)
        return L, sfft.rfft(self.taps, L)

    # -- sampling -------------------------------------------------------------
    def draw_increments(self, rng) -> np.ndarray:
        return levy.sample_increments(self.model, self.grid.eps, self.grid.stream_length, rng)

    def draw_remote(self, rng) -> Optional[np.ndarray]:
        if self.remote is None:
            return None
        return rng.standard_normal(self.remote.n_factors)

    def convolve(self, z: np.ndarray, method: Optional[str] = None) -> np.ndarray:
        """``sum_k w_k z[p - k]`` at the observation positions ``p``."""
        use_fft = self._use_fft if method is None else method == "fft"
        pos = self.positions
        if use_fft:
            L, wf = self._fft_plan
            full = sfft.irfft(sfft.rfft(z, L) * wf, L)
            return full[pos]
        w = self.taps
        out = np.empty(pos.size)
        for j, p in enumerate(pos):
            k = min(p, w.size - 1)
            out[j] = np.dot(w[:k + 1], z[p - k:p + 1][::-1])
        return out

    def values_from(self, z: np.ndarray, xi: Optional[np.ndarray] = None,
                    method: Optional[str] = None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.size != self.grid.stream_length:
            raise ParameterError(f"expected {self.grid.stream_length} increments, got {z.size}")
        x = self.convolve(z, method)
        if self.remote is not None:
            if xi is None:
                raise ParameterError("remote factors required in gaussian remote mode")
            x = x + self.remote.loadings @ xi
        return x

    def sample(self, seed=None) -> SamplePath:
        rng = make_rng(self.grid.seed if seed is None else seed)
        z = self.draw_increments(rng)
        xi = self.draw_remote(rng)
        x = self.values_from(z, xi)
        keep = self.grid.retain_increments
        return SamplePath(x, self.grid, self.kernel, self.model,
                          z if keep else None, xi if keep else None)

    # -- moments of the simulated law -------------------------------------
    def expected_acv(self, H: Optional[int] = None) -> np.ndarray:
        """Exact ``E[gamma_hat_N(h)]`` for ``h = 0..H`` under the simulated law."""
        g = self.grid
        H = g.H if H is None else H
        if H > g.H:
            raise ParameterError("H exceeds the grid's lag budget")
        w = self.taps
        eps = g.eps
        out = np.empty(H + 1)
        for h in range(H + 1):
            s = g.m * h
            prod = w[:w.size - s] * w[s:]
            if g.remote == "gaussian":
                # X_t uses taps 0..K + m(t-1); pairs (k, k + mh) with k <= K + m(t-1)
                csum = np.cumsum(prod)
                idx = np.minimum(self.positions[:g.N], prod.size - 1)
                near = self.sigma2 * eps * csum[idx]
                C = self.remote.loadings
                far = np.einsum("ij,ij->i", C[:g.N], C[h:h + g.N])
                out[h] = float(np.mean(near + far))
            else:
                out[h] = self.sigma2 * eps * float(prod.sum())
        return out


def simulate_path(kernel: Kernel, model: LevyModel, grid: SimulationGrid) -> SamplePath:
    """Simulate one path of the discretised moving average on ``grid``."""
    return Simulator(kernel, model, grid).sample()


@dataclass(frozen=True)
class Decomposition:
    """``gamma_hat(h) = diagonal + off_diagonal + centering``."""

    h: int
    gamma_hat: float
    diagonal: float
    off_diagonal: float
    centering: float


def decompose(path: SamplePath, h: int, b_N: Optional[float] = None) -> Decomposition:
    """Split ``gamma_hat_N(h)`` into diagonal and off-diagonal parts.

    The diagonal part collects the products ``Z_i^2`` of the same
    increment::

        d = (1/N) sum_t sum_k w_k w_{k+mh} (Z_{mt-k}^2 - eps c),

    with ``c = b_N`` when given and ``c = sigma^2`` otherwise; the
    centering term is ``eps c sum_k w_k w_{k+mh}`` and the off-diagonal part
    collects all products of distinct increments.
    """
    if path.increments is None:
        raise StateError("decompose needs a path with retained increments")
    g = path.grid
    if g.remote != "none":
        raise StateError("decompose needs a fixed-window path (remote='none')")
    if int(h) != h or not 0 <= h <= g.H:
        raise ParameterError("h must be an integer in [0, H]")
    from .estimate import sample_acv

    sim = Simulator(path.kernel, path.model, replace(g, method="direct"))
    w = sim.taps
    s = g.m * int(h)
    v = w[:w.size - s] * w[s:]
    z = path.increments
    c = levy.variance(path.model) if b_N is None else float(b_N)
    centering = g.eps * c * float(v.sum())
    z2 = z * z
    pos = sim.positions[:g.N]
    if g.N * v.size <= 4_000_000:
        diag_t = np.array([np.dot(v, z2[p - v.size + 1:p + 1][::-1]) for p in pos])
    else:
        L = sfft.next_fast_len(z2.size + v.size - 1, real=True)
        diag_t = sfft.irfft(sfft.rfft(z2, L) * sfft.rfft(v, L), L)[pos]
    diagonal = float(diag_t.mean()) - centering
    gh = float(sample_acv(path.values, int(h), N=g.N).gamma_hat[int(h)])
    cross = np.mean(path.values[:g.N] * path.values[int(h):int(h) + g.N] - diag_t)
    return Decomposition(int(h), gh, diagonal, float(cross), centering)


@dataclass(frozen=True)
class TruncationReport:
    """Neglected variance and the resulting bias bound per lag."""

    l2_tail: float
    bias_bound_per_lag: np.ndarray
    T: float = field(default=0.0)


def truncation_report(kernel: Kernel, grid_or_T, sigma2: float = 1.0, H: Optional[int] = None) -> TruncationReport:
    """``sigma^2 int_T^inf f^2`` and the bound on ``|E gamma_hat(h) - gamma(h)|``.

    Dropping the part of the integral older than ``T`` removes from
    ``E X_t X_{t+h}`` the products with ``s + h >= T``, i.e.
    ``sigma^2 int_{T-h}^inf f(s) f(s+h) ds``, bounded by Cauchy–Schwarz by
    ``sigma^2 sqrt(int_{T-h} f^2 int_T f^2)``.
    """
    if isinstance(grid_or_T, SimulationGrid):
        T = grid_or_T.eps * (grid_or_T.K_trunc + 1)
        H = grid_or_T.H if H is None else H
        # the simulation uses the taps f(eps k), i.e. the step kernel
        kernel = StepKernel(_base_kernel(kernel, grid_or_T.m), grid_or_T.m)
    else:
        T = float(grid_or_T)
        H = 0 if H is None else H
    tail = sigma2 * tail_l2(kernel, T)
    bounds = np.array([math.sqrt(tail * sigma2 * tail_l2(kernel, max(T - h, 0.0)))
                       for h in range(H + 1)])
    return TruncationReport(tail, bounds, T)


__all__ = ["SimulationGrid", "SamplePath", "Simulator", "simulate_path", "decompose",
           "Decomposition", "truncation_report", "TruncationReport", "Indicator"]
