"""Finite-dimensional Gaussian representation of the remote past.

For a Brownian driver, the contribution of the distant past to ``X_t``,

    R_t = sigma * int_0^inf f(tau_t + u) dW(u),

is approximated by projecting ``u -> f(tau_t + u)`` onto orthonormal
Legendre polynomials on geometrically growing blocks of ``u``.  The
projections of ``dW`` on these basis functions are i.i.d. standard normal,
so ``R_t ~= sum_j c_{t,j} xi_j`` with a loading matrix ``c`` shared by all
observation times (which keeps the joint law of ``(R_t)`` consistent).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre


@dataclass(frozen=True)
class RemoteLoadings:
    """Loadings ``c[t, j]`` and the per-row variance left unrepresented."""

    loadings: np.ndarray
    residual_variance: np.ndarray
    represented_variance: np.ndarray

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]


def block_edges(scale: float, growth: float, horizon: float) -> np.ndarray:
    """Block boundaries ``u_0 = 0 < u_1 < ...`` with ``u_{j+1} - u_j = growth (scale + u_j)``."""
    edges = [0.0]
    while edges[-1] < horizon * scale:
        edges.append(edges[-1] + growth * (scale + edges[-1]))
    return np.asarray(edges)


def remote_loadings(fn, taus: np.ndarray, sigma: float = 1.0, growth: float = 0.5,
                    degree: int = 4, horizon: float = None, tail_constant: float = 0.0,
                    d: float = 0.25) -> RemoteLoadings:
    """Loadings of ``sigma * int_0^inf fn(tau + u) dW(u)`` for each ``tau`` in ``taus``.

    Parameters
    ----------
    fn : callable
        Vectorised kernel.
    taus : ndarray
        Distances from each observation time to the start of the remote past.
    growth, degree, horizon
        Block growth factor, polynomials per block, and extent of the
        represented region in multiples of ``min(taus)`` (by default chosen
        so that at most 1e-4 of the remote variance lies beyond it).
    tail_constant, d
        ``fn(x) ~ tail_constant * x^(d-1)``; used for the variance beyond
        the last block.
    """
    taus = np.asarray(taus, dtype=float)
    if horizon is None:
        # leave at most 1e-4 of the remote variance beyond the last block
        horizon = min(1e60, 1e4 ** (1.0 / (1.0 - 2.0 * d))) if tail_constant else 1e8
    edges = block_edges(float(taus.min()), growth, horizon)
    nodes, weights = legendre.leggauss(degree + 4)
    basis = np.stack([np.sqrt(2 * q + 1) * legendre.Legendre.basis(q)(nodes)
                      for q in range(degree)])            # (degree, nodes)
    nb = edges.size - 1
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    u = lo[:, None] + half[:, None] * (nodes[None, :] + 1.0)   # (nb, nodes)
    loads = np.empty((taus.size, nb, degree))
    energy = np.zeros(taus.size)
    for start in range(0, taus.size, 512):
        tt = taus[start:start + 512]
        vals = fn(tt[:, None, None] + u[None, :, :])            # (t, nb, nodes)
        w = vals * weights[None, None, :]
        # e_q(u) = sqrt((2q+1) / (2 half)) P_q(x), so int f e_q du = sqrt(half/2) sum_k w_k f(u_k) sqrt(2q+1) P_q(x_k)
        loads[start:start + 512] = np.sqrt(0.5 * half)[None, :, None] * np.einsum("tbk,qk->tbq", w, basis)
        energy[start:start + 512] = np.sum(half[None, :] * np.sum(w * vals, axis=2), axis=1)
    loads = loads.reshape(taus.size, nb * degree) * sigma
    represented = np.sum(loads ** 2, axis=1)
    beyond = tail_constant ** 2 * (taus + edges[-1]) ** (2 * d - 1) / (1 - 2 * d)
    residual = sigma ** 2 * (np.maximum(energy - represented / sigma ** 2, 0.0) + beyond)
    return RemoteLoadings(loads, residual, represented)
