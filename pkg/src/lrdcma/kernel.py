"""Kernels ``f`` of continuous-time moving averages ``X_t = int f(t-s) dL_s``.

All kernels vanish on ``(-inf, 0]``, are bounded, and (except the test-only
indicator) behave like ``C_d t^(d-1)`` at infinity with ``d`` in (0, 1/2).

Variants
--------
PowerLaw(d, C_d)
    ``f = C_d`` on (0, 1] and ``C_d t^(d-1)`` beyond.
FlnIncrement(d)
    ``f(t) = (t_+^d - (t-1)_+^d) / Gamma(d+1)``, the kernel of fractional
    Lévy noise.
Ficarma(a, b, d)
    Riemann–Liouville integral of order ``d`` of a CARMA kernel.
Indicator()
    ``1_(0,1]``; short memory, for tests only.
StepKernel(base, m)
    Left-endpoint step approximation ``f_m(t) = f(floor(m t) / m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Tuple

import numpy as np
from scipy import integrate, special

from .errors import NumericError, ParameterError, UnsupportedConfigurationError

DEFAULT_QUAD_TOL = 1e-8
DEFAULT_I_MAX = 100_000


def _check_d(d):
    if not (isinstance(d, (int, float, np.floating)) and 0 < d < 0.5):
        raise ParameterError("d must lie in (0, 0.5)")
    return float(d)


class Kernel:
    """Common interface: ``kernel(t)`` evaluates ``f`` elementwise."""

    d: float

    #: short-memory kernels (indicator) have no tail constant
    long_memory = True

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        if np.any(pos):
            out[pos] = self._positive(t[pos])
        return out if out.ndim else float(out)

    def _positive(self, t: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def C_d(self) -> float:
        raise NotImplementedError

    @property
    def bound_K(self) -> float:
        """A constant with ``|f(t)| <= K max(1, t^(d-1))``."""
        raise NotImplementedError

    def tail(self, t):
        """Leading tail ``C_d t^(d-1)``."""
        return self.C_d * np.asarray(t, dtype=float) ** (self.d - 1.0)

    def describe(self) -> dict:
        return {"variant": type(self).__name__}


@dataclass(frozen=True)
class PowerLaw(Kernel):
    """Bounded power-law kernel: ``C_d`` on (0, 1], ``C_d t^(d-1)`` for ``t > 1``."""

    d: float
    C: float = 1.0

    def __post_init__(self):
        _check_d(self.d)
        if not self.C > 0:
            raise ParameterError("C_d must be positive")

    def _positive(self, t):
        return self.C * np.where(t <= 1.0, 1.0, t) ** (self.d - 1.0)

    @property
    def C_d(self):
        return self.C

    @property
    def bound_K(self):
        return self.C

    def describe(self):
        return {"variant": "power_law", "d": self.d, "C_d": self.C}


@dataclass(frozen=True)
class FlnIncrement(Kernel):
    """Fractional Lévy noise kernel ``(t_+^d - (t-1)_+^d) / Gamma(d+1)``."""

    d: float

    def __post_init__(self):
        _check_d(self.d)

    def _positive(self, t):
        d = self.d
        # t^d (1 - (1 - 1/t)^d) avoids cancellation for large t
        big = t > 1.0
        out = t ** d
        tb = t[big]
        out[big] = -(tb ** d) * np.expm1(d * np.log1p(-1.0 / tb))
        return out / special.gamma(d + 1.0)

    @property
    def C_d(self):
        return self.d / special.gamma(self.d + 1.0)

    @property
    def bound_K(self):
        # t^d - (t-1)^d <= t^(d-1) for t >= 1 and <= 1 on (0, 1]
        return 1.0 / special.gamma(self.d + 1.0)

    def describe(self):
        return {"variant": "fln_increment", "d": self.d}


@dataclass(frozen=True)
class Indicator(Kernel):
    """Test-only kernel ``1_(0,1]`` (short memory)."""

    d: float = 0.0
    long_memory = False

    def _positive(self, t):
        return (t <= 1.0).astype(float)

    @property
    def C_d(self):
        return 0.0

    @property
    def bound_K(self):
        return 1.0

    def describe(self):
        return {"variant": "indicator"}


# ---------------------------------------------------------------------------
# CARMA / FICARMA
# ---------------------------------------------------------------------------

def _carma_roots(a: Sequence[float]) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.size < 1:
        raise ParameterError("a must list the coefficients a_1..a_p of z^p + a_1 z^(p-1) + ... + a_p")
    roots = np.roots(np.concatenate([[1.0], a]))
    if np.any(roots.real >= 0):
        raise ParameterError("all roots of a(z) must have negative real parts")
    diff = np.abs(roots[:, None] - roots[None, :]) + np.eye(roots.size)
    if np.any(diff < 1e-8):
        raise UnsupportedConfigurationError("a(z) has repeated roots; only distinct roots are supported")
    return roots


def _carma_residues(a, b) -> Tuple[np.ndarray, np.ndarray]:
    """Roots ``lambda_j`` and weights ``b(lambda_j) / a'(lambda_j)``."""
    roots = _carma_roots(a)
    b = np.asarray(b, dtype=float)
    if b.ndim != 1 or b.size < 1:
        raise ParameterError("b must list the coefficients b_0..b_q of b_0 + b_1 z + ... + b_q z^q")
    if b.size - 1 >= roots.size:
        raise ParameterError("deg b must be smaller than deg a")
    if b[0] == 0:
        raise ParameterError("b_0 must be nonzero")
    apoly = np.concatenate([[1.0], np.asarray(a, dtype=float)])
    dpoly = np.polyder(apoly)
    weights = np.polyval(b[::-1], roots) / np.polyval(dpoly, roots)
    return roots, weights


def carma_kernel(a: Sequence[float], b: Sequence[float], t):
    """CARMA kernel ``g(t) = sum_j b(l_j)/a'(l_j) exp(l_j t)`` for ``t >= 0``.

    Parameters
    ----------
    a : sequence
        ``[a_1, ..., a_p]`` of the monic ``a(z) = z^p + a_1 z^(p-1) + ... + a_p``.
    b : sequence
        ``[b_0, ..., b_q]`` of ``b(z) = b_0 + b_1 z + ... + b_q z^q``, ``q < p``.
    t : float or array
    """
    roots, weights = _carma_residues(a, b)
    t = np.asarray(t, dtype=float)
    val = np.exp(np.multiply.outer(t, roots)) @ weights
    imag = np.max(np.abs(np.imag(val))) if val.size else 0.0
    scale = max(1.0, float(np.max(np.abs(val)))) if val.size else 1.0
    if imag > 1e-10 * scale:
        raise NumericError(f"CARMA kernel has imaginary residue {imag:.3g}")
    out = np.where(t >= 0, np.real(val), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Ficarma(Kernel):
    """FICARMA(p, d, q) kernel ``f(t) = int_0^t g(t-u) u^(d-1)/Gamma(d) du``."""

    a: tuple
    b: tuple
    d: float
    quad_tol: float = DEFAULT_QUAD_TOL

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in np.atleast_1d(self.a)))
        object.__setattr__(self, "b", tuple(float(x) for x in np.atleast_1d(self.b)))
        _check_d(self.d)
        _carma_residues(self.a, self.b)

    @cached_property
    def _residues(self):
        return _carma_residues(self.a, self.b)

    def g(self, t):
        return carma_kernel(self.a, self.b, t)

    def _positive(self, t):
        return np.array([ficarma_eval(self, float(x), self.quad_tol) for x in t])

    @property
    def C_d(self):
        return self.b[0] / (self.a[-1] * special.gamma(self.d))

    @cached_property
    def _bound(self):
        t = np.geomspace(1e-6, 1e5, 400)
        ratio = np.abs(self(t)) / np.maximum(1.0, t ** (self.d - 1.0))
        return float(1.05 * ratio.max())

    @property
    def bound_K(self):
        return self._bound

    @cached_property
    def decay_rate(self) -> float:
        return float(-np.max(self._residues[0].real))

    def describe(self):
        return {"variant": "ficarma", "d": self.d, "a": list(self.a), "b": list(self.b)}


def ficarma_eval(kernel: Ficarma, t: float, quad_tol: float = DEFAULT_QUAD_TOL) -> float:
    """Evaluate a FICARMA kernel by adaptive quadrature.

    With ``u = w^(1/d)`` the fractional integral becomes the regular integral

        f(t) = 1/Gamma(d+1) * int_0^(t^d) g(t - w^(1/d)) dw,

    which is split where ``u`` reaches ``t/2``; on the far half the original
    variable ``u`` is used (the integrand is smooth there) and the range is
    cut where ``g`` is negligible relative to ``quad_tol``.
    """
    if not t > 0:
        raise ParameterError("t must be positive")
    d = kernel.d
    g = kernel.g
    gd1 = special.gamma(d + 1.0)
    half = 0.5 * t
    # near part: u in (0, half]
    w_half = half ** d
    near, e1 = _quad(lambda w: g(t - w ** (1.0 / d)), 0.0, w_half, quad_tol)
    near /= gd1
    # far part: u in (half, t); g(t-u) with t-u in (0, half)
    rate = kernel.decay_rate
    width = min(half, 40.0 / rate)  # g(v) ~ exp(-rate v) is below 1e-17 beyond
    far, e2 = _quad(lambda u: g(t - u) * u ** (d - 1.0), t - width, t, quad_tol)
    far /= special.gamma(d)
    val = near + far
    err = e1 / gd1 + e2 / special.gamma(d)
    if err > max(quad_tol * abs(val), 1e-300) * 10:
        raise NumericError(f"ficarma_eval did not converge at t={t}: estimate {val}, error {err}")
    return float(val)


def _quad(fn, lo, hi, tol, points=None):
    if hi <= lo:
        return 0.0, 0.0
    val, err = integrate.quad(fn, lo, hi, epsabs=0.0, epsrel=tol, limit=500, points=points)
    return val, err


# ---------------------------------------------------------------------------
# step approximation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepKernel(Kernel):
    """Left-endpoint step approximation ``f_m(t) = f(eps * floor(t / eps))``, ``eps = 1/m``.

    Since ``f(0) = 0`` the step kernel vanishes on ``[0, eps)``.
    """

    base: Kernel
    m: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ParameterError("m must be a positive integer")

    @property
    def d(self):
        return self.base.d

    @property
    def long_memory(self):
        return self.base.long_memory

    def _positive(self, t):
        return self.base(np.floor(t * self.m) / self.m)

    @property
    def C_d(self):
        return self.base.C_d

    @property
    def bound_K(self):
        return self.base.bound_K

    def taps(self, n: int) -> np.ndarray:
        """``f(eps k)`` for ``k = 0..n-1``."""
        return np.asarray(self.base(np.arange(n) / self.m), dtype=float)

    def describe(self):
        out = dict(self.base.describe())
        out["m"] = self.m
        return out


def evaluate(kernel: Kernel, t):
    """Evaluate ``kernel`` at ``t`` (scalar or array)."""
    return kernel(t)


# ---------------------------------------------------------------------------
# autocovariance
# ---------------------------------------------------------------------------

def autocovariance(kernel: Kernel, sigma2: float, h: float, quad_tol: float = DEFAULT_QUAD_TOL,
                   return_error: bool = False):
    """``gamma(h) = sigma^2 int_0^inf f(s) f(s+h) ds``.

    The integral is split at ``s = 1``; on ``(1, inf)`` the substitution
    ``s = w^(-1/(1-2d))`` maps the algebraic tail onto a bounded integrand
    on (0, 1].  Step kernels are summed exactly on the lattice with an
    integral tail correction.
    """
    if not h >= 0:
        raise ParameterError("h must be nonnegative")
    if not sigma2 > 0:
        raise ParameterError("sigma2 must be positive")
    if isinstance(kernel, Indicator):
        val, err = max(0.0, 1.0 - h), 0.0
    elif isinstance(kernel, StepKernel):
        val, err = _step_acv(kernel, h)
    else:
        val, err = _smooth_acv(kernel, float(h), quad_tol)
    val, err = sigma2 * val, sigma2 * err
    return (val, err) if return_error else val


def _smooth_acv(kernel: Kernel, h: float, tol: float):
    d = kernel.d
    q = 1.0 / (1.0 - 2.0 * d)
    brk = [x for x in (1.0 - h,) if 0 < x < 1]
    head, e1 = _quad(lambda s: kernel(s) * kernel(s + h), 0.0, 1.0, tol, brk or None)

    def tail_integrand(w):
        if w <= 0:
            return kernel.C_d ** 2 * q  # limit of the transformed integrand
        s = w ** (-q)
        return q * w ** (-q - 1.0) * kernel(s) * kernel(s + h)

    tail, e2 = _quad(tail_integrand, 0.0, 1.0, tol)
    val = head + tail
    err = e1 + e2
    if err > 10 * tol * abs(val) + 1e-14:
        raise NumericError(f"autocovariance quadrature error {err:.3g} exceeds tolerance")
    return val, err


def _step_acv(kernel: StepKernel, h: float, n_terms: int = 1 << 22):
    m = kernel.m
    eps = 1.0 / m
    shift = h * m
    if abs(shift - round(shift)) > 1e-9:
        # off-lattice lag: fall back to quadrature of the step function
        return _smooth_acv(kernel, h, DEFAULT_QUAD_TOL)
    shift = int(round(shift))
    taps = kernel.taps(n_terms + shift)
    val = eps * float(np.dot(taps[:n_terms], taps[shift:shift + n_terms]))
    # tail: eps * sum_{k >= n} f(eps k) f(eps k + h) ~ int_{eps (n - 1/2)}^inf C^2 (x + h/2)^(2d-2) dx
    d, C = kernel.d, kernel.C_d
    x0 = eps * (n_terms - 0.5) + 0.5 * h
    tail = C ** 2 * x0 ** (2 * d - 1) / (1 - 2 * d) if kernel.long_memory else 0.0
    return val + tail, abs(tail) * 1e-3


def acv_vector(kernel: Kernel, sigma2: float, H: int, quad_tol: float = DEFAULT_QUAD_TOL) -> np.ndarray:
    """``gamma(0..H)``."""
    return np.array([autocovariance(kernel, sigma2, h, quad_tol) for h in range(H + 1)])


def tail_l2(kernel: Kernel, T: float) -> float:
    """``int_T^inf f(s)^2 ds`` (closed form for power laws, quadrature otherwise)."""
    if T < 0:
        raise ParameterError("T must be nonnegative")
    if isinstance(kernel, Indicator):
        return max(0.0, 1.0 - T)
    if isinstance(kernel, StepKernel):
        return _step_tail_l2(kernel, T)
    base = kernel
    d = kernel.d
    if isinstance(base, PowerLaw) and T >= 1:
        return base.C ** 2 * T ** (2 * d - 1) / (1 - 2 * d)
    q = 1.0 / (1.0 - 2.0 * d)
    T = max(T, 1e-300)

    def integrand(w):
        if w <= 0:
            return kernel.C_d ** 2 * q * T ** (2 * d - 1)
        s = T * w ** (-q)
        return T * q * w ** (-q - 1.0) * kernel(s) ** 2

    val, _ = _quad(integrand, 0.0, 1.0, 1e-10)
    return val


def _step_tail_l2(kernel: "StepKernel", T: float, n_terms: int = 1 << 20) -> float:
    """``int_T^inf f_m^2`` as a lattice sum with an integral remainder."""
    m, base = kernel.m, kernel.base
    eps = 1.0 / m
    j0 = int(math.floor(T * m))
    first = (eps * (j0 + 1) - T) * float(base(eps * j0)) ** 2
    k = np.arange(j0 + 1, j0 + 1 + n_terms, dtype=float)
    body = eps * float(np.sum(base(eps * k) ** 2))
    # remaining cells k >= j0 + 1 + n_terms: midpoint rule for the continuous tail
    rest = tail_l2(base, eps * (j0 + 0.5 + n_terms)) if base.long_memory else 0.0
    return first + body + rest


# ---------------------------------------------------------------------------
# periodic sums G_h
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GValue:
    """Values of a truncated periodic sum with the bound on the neglected tail."""

    value: np.ndarray
    tail_bound: float
    I_max: int = field(default=0)


def G(kernel: Kernel, h: int, s, I_max: int = DEFAULT_I_MAX, with_bound: bool = False):
    """``G_h(s) = sum_i f(i + s) f(i + h + s)`` for ``s`` in [0, 1].

    Terms ``i <= I_max`` are summed exactly.  For long-memory kernels the
    remaining terms are replaced by ``int_{I+1/2}^inf C_d^2 (x+s+h/2)^(2d-2) dx``;
    the reported bound is the crude majorant ``K^2 sum_{i > I} i^(2d-2)``.
    """
    if int(h) != h or h < 0:
        raise ParameterError("h must be a nonnegative integer")
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any((s_arr < 0) | (s_arr > 1)):
        raise ParameterError("s must lie in [0, 1]")
    total = np.zeros_like(s_arr)
    chunk = max(1, 2_000_000 // max(1, s_arr.size))
    for start in range(0, I_max + 1, chunk):
        i = np.arange(start, min(I_max + 1, start + chunk), dtype=float)
        x = i[:, None] + s_arr[None, :]
        total += np.sum(kernel(x) * kernel(x + h), axis=0)
    bound = 0.0
    if kernel.long_memory:
        d, C = kernel.d, kernel.C_d
        total += C ** 2 * (I_max + 0.5 + s_arr + 0.5 * h) ** (2 * d - 1) / (1 - 2 * d)
        bound = kernel.bound_K ** 2 * I_max ** (2 * d - 1) / (1 - 2 * d)
    elif isinstance(kernel, StepKernel) or isinstance(kernel, Indicator):
        bound = 0.0
    out = total if np.ndim(s) else float(total[0])
    return GValue(out, bound, I_max) if with_bound else out


def G_step(kernel: Kernel, m: int, h: int, s, I_max: int = DEFAULT_I_MAX, with_bound: bool = False):
    """``G_{m,h}(s)``: the periodic sum of the step kernel, ``G_h(floor(m s)/m)``."""
    if isinstance(kernel, StepKernel):
        kernel = kernel.base
    s_arr = np.asarray(s, dtype=float)
    if np.any((s_arr < 0) | (s_arr > 1)):
        raise ParameterError("s must lie in [0, 1]")
    cells = np.floor(s_arr * m + 1e-12) / m
    uniq, inv = np.unique(np.atleast_1d(cells), return_inverse=True)
    res = G(kernel, h, uniq, I_max, with_bound=True)
    vals = np.asarray(res.value)[inv.reshape(-1)]
    out = vals.reshape(np.shape(s_arr)) if np.ndim(s) else float(vals[0])
    return GValue(out, res.tail_bound, I_max) if with_bound else out


def boundedness_certificate(kernel: Kernel, t=None) -> Tuple[float, float]:
    """Return ``(max_t |f(t)|/max(1, t^(d-1)), K)`` over a dense grid."""
    if t is None:
        t = np.concatenate([np.linspace(1e-6, 2.0, 2001), np.geomspace(2.0, 1e6, 2000)])
    ratio = np.abs(kernel(t)) / np.maximum(1.0, t ** (kernel.d - 1.0)) if kernel.long_memory \
        else np.abs(kernel(t))
    return float(ratio.max()), float(kernel.bound_K)


def make_kernel(variant: str, d: float = None, C_d: float = 1.0, a=None, b=None,
                quad_tol: float = DEFAULT_QUAD_TOL) -> Kernel:
    """Build a kernel from its configuration name."""
    variant = variant.lower()
    if variant in ("power_law", "powerlaw"):
        return PowerLaw(d, C_d)
    if variant in ("fln_increment", "fln"):
        return FlnIncrement(d)
    if variant == "ficarma":
        if a is None or b is None:
            raise ParameterError("ficarma needs coefficients a and b")
        return Ficarma(tuple(a), tuple(b), d, quad_tol)
    if variant == "indicator":
        return Indicator()
    raise ParameterError(f"unknown kernel variant {variant!r}")
