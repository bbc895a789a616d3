"""Driving Lévy processes: increments, moments, tails and norming sequences.

The driver is a Brownian motion plus an independent compound Poisson
process whose jumps are symmetric Pareto variables,

    P[|J| > y] = min(1, (y / x0)^(-alpha)),   sign(J) = +-1 with prob. 1/2,

optionally truncated at ``10 * x0`` (the *bounded-jump* variant, which has
moments of every order).

Tail quantities of ``L_1`` are estimated with a conditional ("largest jump")
Monte Carlo estimator: given all but the largest jump, the contribution of
the largest jump is integrated in closed form.  The crude indicator
estimator has infinite relative variance in the heavy-tailed case, the
conditional one is smooth and monotone in the threshold, which makes
bisection for ``a_N`` well defined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DomainError, ParameterError, ResolutionError
from .rng import make_rng

BOUNDED_JUMP_FACTOR = 10.0
_DEFAULT_MAX_BUDGET = 2_000_000


@dataclass(frozen=True)
class LevyModel:
    """Parametric zero-mean Lévy process.

    Parameters
    ----------
    brownian_sd : float
        Standard deviation of the Gaussian part per unit time.
    jump_rate : float
        Intensity ``lambda`` of the compound Poisson part.
    jump_tail_index : float
        Pareto tail index ``alpha`` of the jump sizes.  Must exceed 2 when
        jumps are present so that the variance is finite.
    jump_scale : float
        Pareto scale ``x0``.
    bounded_jumps : bool
        Truncate jump sizes at ``10 * x0``.
    centering : float
        Drift per unit time; symmetric jumps force it to be zero.
    """

    brownian_sd: float = 1.0
    jump_rate: float = 0.0
    jump_tail_index: float = 2.5
    jump_scale: float = 1.0
    bounded_jumps: bool = False
    centering: float = 0.0

    def __post_init__(self):
        problems = []
        if not (np.isfinite(self.brownian_sd) and self.brownian_sd >= 0):
            problems.append("brownian_sd must be finite and nonnegative")
        if not (np.isfinite(self.jump_rate) and self.jump_rate >= 0):
            problems.append("jump_rate must be finite and nonnegative")
        if not (np.isfinite(self.jump_scale) and self.jump_scale > 0):
            problems.append("jump_scale must be positive")
        if not (np.isfinite(self.jump_tail_index) and self.jump_tail_index > 0):
            problems.append("jump_tail_index must be positive")
        elif self.jump_rate > 0 and self.jump_tail_index <= 2 and not self.bounded_jumps:
            problems.append("jump_tail_index must exceed 2 for a finite variance")
        if self.centering != 0.0:
            problems.append("centering must be 0 (symmetric jumps give E[L_1] = 0)")
        if not problems and self.brownian_sd == 0 and self.jump_rate == 0:
            problems.append("the model has zero variance")
        if problems:
            raise ParameterError("; ".join(problems))

    # -- convenience -----------------------------------------------------
    @classmethod
    def brownian(cls, sd: float = 1.0) -> "LevyModel":
        """Pure Brownian motion with standard deviation ``sd``."""
        return cls(brownian_sd=sd, jump_rate=0.0)

    @classmethod
    def pure_jump(cls, rate: float = 1.0, alpha: float = 2.5, x0: float = 1.0,
                  bounded: bool = False) -> "LevyModel":
        """Compound Poisson process with symmetric Pareto jumps."""
        return cls(brownian_sd=0.0, jump_rate=rate, jump_tail_index=alpha,
                   jump_scale=x0, bounded_jumps=bounded)

    @property
    def alpha(self) -> float:
        return self.jump_tail_index

    @property
    def has_jumps(self) -> bool:
        return self.jump_rate > 0

    @property
    def jump_cap(self) -> float:
        """Upper bound of ``|J|`` (``inf`` for unbounded jumps)."""
        return BOUNDED_JUMP_FACTOR * self.jump_scale if self.bounded_jumps else math.inf

    @property
    def is_brownian(self) -> bool:
        return not self.has_jumps

    def has_finite_fourth_moment(self) -> bool:
        return math.isfinite(fourth_moment(self))

    def is_heavy_tailed_admissible(self) -> bool:
        """Pure-jump, symmetric, unbounded, with ``alpha`` in (2, 4)."""
        return (self.brownian_sd == 0 and self.has_jumps and not self.bounded_jumps
                and 2 < self.alpha < 4)

    def at_time(self, dt: float) -> "LevyModel":
        """Model of ``L_dt`` rescaled to unit time (same law as ``L_dt``)."""
        if not dt > 0:
            raise ParameterError("dt must be positive")
        return LevyModel(self.brownian_sd * math.sqrt(dt), self.jump_rate * dt,
                         self.jump_tail_index, self.jump_scale, self.bounded_jumps)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def jump_moment(model: LevyModel, p: float) -> float:
    """``E[|J|^p]`` for the (possibly truncated) Pareto jump law."""
    a, x0 = model.alpha, model.jump_scale
    if not model.bounded_jumps:
        if p >= a:
            return math.inf
        return a * x0 ** p / (a - p)
    c = model.jump_cap
    norm = 1.0 - (c / x0) ** (-a)
    if abs(p - a) < 1e-12:
        return a * x0 ** a * math.log(c / x0) / norm
    return a * x0 ** a * (c ** (p - a) - x0 ** (p - a)) / ((p - a) * norm)


def variance(model: LevyModel) -> float:
    """``sigma^2 = Var(L_1)``."""
    v = model.brownian_sd ** 2
    if model.has_jumps:
        v += model.jump_rate * jump_moment(model, 2.0)
    return v


def fourth_moment(model: LevyModel) -> float:
    """``E[L_1^4] = eta * sigma^4``; ``math.inf`` when it diverges.

    Cumulants of independent parts add: the Gaussian part has none beyond
    the second, the compound Poisson part has ``kappa_4 = lambda E[J^4]``.
    Hence ``E[L^4] = kappa_4 + 3 sigma^4``.
    """
    s2 = variance(model)
    k4 = 0.0
    if model.has_jumps:
        k4 = model.jump_rate * jump_moment(model, 4.0)
    return k4 + 3.0 * s2 ** 2 if math.isfinite(k4) else math.inf


def eta(model: LevyModel) -> float:
    """Kurtosis ``E[L_1^4] / sigma^4``."""
    return fourth_moment(model) / variance(model) ** 2


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _jump_sizes(model: LevyModel, n: int, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(n)
    a, x0 = model.alpha, model.jump_scale
    if model.bounded_jumps:
        # inverse CDF of the Pareto law conditioned on |J| <= cap
        tail_at_cap = (model.jump_cap / x0) ** (-a)
        u = tail_at_cap + (1.0 - tail_at_cap) * u
    else:
        u = 1.0 - u  # in (0, 1]
    mag = x0 * u ** (-1.0 / a)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return sign * mag


def sample_increments(model: LevyModel, dt: float, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` i.i.d. increments ``L_{t+dt} - L_t``.

    Parameters
    ----------
    model : LevyModel
    dt : float
        Time step, ``dt > 0``.
    n : int
        Number of increments.
    seed : int, SeedSequence or Generator
        Source of randomness; identical seeds give identical output.
    """
    if not (isinstance(dt, (int, float, np.floating)) and dt > 0 and math.isfinite(dt)):
        raise ParameterError("dt must be a positive finite number")
    if int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    n = int(n)
    rng = make_rng(seed)
    if model.brownian_sd > 0:
        out = rng.standard_normal(n)
        out *= model.brownian_sd * math.sqrt(dt)
    else:
        out = np.zeros(n)
    if model.has_jumps:
        counts = rng.poisson(model.jump_rate * dt, n)
        total = int(counts.sum())
        if total:
            owner = np.repeat(np.arange(n), counts)
            out += np.bincount(owner, weights=_jump_sizes(model, total, rng), minlength=n)
    return out


# ---------------------------------------------------------------------------
# conditional Monte Carlo for tail functionals of L_1
# ---------------------------------------------------------------------------

@dataclass
class _ConditionalSample:
    """Residual sums and conditioning thresholds for the largest-jump estimator."""

    n_jumps: np.ndarray     # Poisson counts
    rest: np.ndarray        # L_1 minus the largest jump (all of L_1 if no jump)
    lower: np.ndarray       # the largest jump must exceed this magnitude


def _conditional_sample(model: LevyModel, budget: int, rng) -> _ConditionalSample:
    gauss = model.brownian_sd * rng.standard_normal(budget) if model.brownian_sd > 0 \
        else np.zeros(budget)
    if not model.has_jumps:
        return _ConditionalSample(np.zeros(budget, dtype=np.int64), gauss,
                                  np.zeros(budget))
    counts = rng.poisson(model.jump_rate, budget)
    others = np.maximum(counts - 1, 0)
    total = int(others.sum())
    rest = gauss.copy()
    largest = np.zeros(budget)
    if total:
        owner = np.repeat(np.arange(budget), others)
        jumps = _jump_sizes(model, total, rng)
        rest += np.bincount(owner, weights=jumps, minlength=budget)
        np.maximum.at(largest, owner, np.abs(jumps))
    lower = np.maximum(largest, model.jump_scale)
    return _ConditionalSample(counts, rest, lower)


def _power_integral(model: LevyModel, lo, hi, q: float):
    """``int_lo^hi r^q * alpha x0^alpha r^(-alpha-1) dr`` (normalised), elementwise.

    ``lo`` and ``hi`` are arrays with ``lo <= hi``; infinite ``hi`` allowed.
    """
    a, x0 = model.alpha, model.jump_scale
    norm = 1.0 - (model.jump_cap / x0) ** (-a) if model.bounded_jumps else 1.0
    e = q - a
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if abs(e) < 1e-12:
            val = a * x0 ** a * (np.log(hi) - np.log(lo))
        else:
            hi_term = np.where(np.isinf(hi), 0.0 if e < 0 else np.inf, hi ** e)
            val = a * x0 ** a * (hi_term - lo ** e) / e
    return np.where(hi > lo, val, 0.0) / norm


def _largest_jump_terms(model: LevyModel, cs: _ConditionalSample, y: float, moment: int):
    """Per-sample conditional estimates of ``E[L^moment 1{|L| > y}]``."""
    n = cs.n_jumps
    s = cs.rest
    est = np.zeros_like(s)
    no_jump = n == 0
    if np.any(no_jump):
        s0 = s[no_jump]
        est[no_jump] = (np.abs(s0) > y) * s0 ** moment
    jm = ~no_jump
    if not np.any(jm):
        return est
    s1, lo, cnt = s[jm], cs.lower[jm], n[jm].astype(float)
    cap = model.jump_cap
    acc = np.zeros_like(s1)
    for sign in (1.0, -1.0):
        # |s + sign*r| > y  <=>  r > y - sign*s  or  r < -y - sign*s
        upper_start = y - sign * s1
        lower_end = -y - sign * s1
        pieces = [
            (np.maximum(lo, upper_start), np.full_like(s1, cap)),
            (lo, np.minimum(np.full_like(s1, cap), lower_end)),
        ]
        for a_, b_ in pieces:
            if moment == 0:
                acc += _power_integral(model, a_, b_, 0.0)
            else:
                # (s + sign r)^2 = s^2 + 2 sign s r + r^2
                acc += (s1 ** 2 * _power_integral(model, a_, b_, 0.0)
                        + 2 * sign * s1 * _power_integral(model, a_, b_, 1.0)
                        + _power_integral(model, a_, b_, 2.0))
    est[jm] = cnt * 0.5 * acc
    return est


@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo estimate of ``P[|L_1| > y]``."""

    y: float
    estimate: float
    stderr: float
    asymptote: float
    method: str
    budget: int


def _tail_asymptote(model: LevyModel, y: float) -> float:
    if not model.has_jumps:
        return 2.0 * stats.norm.sf(y / model.brownian_sd)
    if model.bounded_jumps and y >= model.jump_cap:
        return 0.0
    return model.jump_rate * (y / model.jump_scale) ** (-model.alpha)


def tail_probability(model: LevyModel, y: float, sample_budget: int = 100_000,
                     seed=0, method: str = "conditional") -> TailEstimate:
    """Estimate ``P[|L_1| > y]``.

    Parameters
    ----------
    model : LevyModel
    y : float
        Threshold, ``y > 0``.
    sample_budget : int
        Number of Monte Carlo draws of ``L_1``.
    seed : seed-like
    method : {"conditional", "crude"}
        Largest-jump conditional estimator (default) or plain indicator mean.

    Returns
    -------
    TailEstimate
        Estimate, its standard error and the single-big-jump asymptote
        ``lambda (y/x0)^(-alpha)`` (the Gaussian tail for Brownian models).
    """
    if not y > 0:
        raise ParameterError("y must be positive")
    budget = _check_budget(sample_budget)
    rng = make_rng(seed)
    if method == "crude":
        x = sample_increments(model, 1.0, budget, rng)
        vals = (np.abs(x) > y).astype(float)
    elif method == "conditional":
        vals = _largest_jump_terms(model, _conditional_sample(model, budget, rng), y, 0)
    else:
        raise ParameterError(f"unknown method {method!r}")
    return TailEstimate(float(y), float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(budget)),
                        _tail_asymptote(model, y), method, budget)


def _check_budget(budget) -> int:
    if int(budget) != budget or budget < 2:
        raise ParameterError("sample_budget must be an integer >= 2")
    return int(budget)


# ---------------------------------------------------------------------------
# norming sequences
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormingSequences:
    """Norming constants at sample size ``N``.

    ``a_N`` is the value produced by ``method``; both the Monte Carlo and
    the asymptotic values are kept for cross-checking.
    """

    N: int
    a_N: float
    method: str
    a_N_mc: Optional[float] = None
    a_N_asymptotic: Optional[float] = None
    a_N_stderr: Optional[float] = None
    b_N: Optional[float] = None
    karamata: Optional[float] = None
    extras: dict = field(default_factory=dict, compare=False)


def asymptotic_a(model: LevyModel, N: int) -> float:
    """``a_N ~ x0 (lambda N)^(1/alpha)`` (Gaussian quantile for Brownian models)."""
    if not model.has_jumps:
        return float(model.brownian_sd * stats.norm.isf(0.5 / N))
    return float(model.jump_scale * (model.jump_rate * N) ** (1.0 / model.alpha))


def norming_a(model: LevyModel, N: int, sample_budget: Optional[int] = None, seed=0,
              method: str = "monte-carlo", rtol: float = 1e-3,
              max_rel_stderr: float = 0.05) -> NormingSequences:
    """``a_N = inf{y : P[|L_1| > y] < 1/N}``.

    The Monte Carlo method bisects the conditional tail estimate, which is
    nonincreasing in ``y`` for a fixed set of draws.  The default budget is
    ``min(100 N, 2e6)``; a :class:`ResolutionError` is raised when the
    relative standard error of the tail estimate at the solution exceeds
    ``max_rel_stderr``.
    """
    if int(N) != N or N < 1:
        raise ParameterError("N must be a positive integer")
    N = int(N)
    asym = asymptotic_a(model, N)
    if method == "asymptotic":
        return NormingSequences(N, asym, "asymptotic", None, asym)
    if method != "monte-carlo":
        raise ParameterError(f"unknown method {method!r}")
    budget = min(100 * N, _DEFAULT_MAX_BUDGET) if sample_budget is None else _check_budget(sample_budget)
    rng = make_rng(seed)
    cs = _conditional_sample(model, budget, rng)
    target = 1.0 / N

    def tail(y):
        return _largest_jump_terms(model, cs, y, 0)

    # P[|L| > 0+]: any jump or any Gaussian part makes |L| > 0
    p0 = 1.0 if model.brownian_sd > 0 else 1.0 - math.exp(-model.jump_rate)
    if p0 < target:
        return NormingSequences(N, 0.0, "monte-carlo", 0.0, asym, 0.0)
    lo, hi = 0.0, max(asym, model.jump_scale, 1e-300)
    while tail(hi).mean() >= target:
        lo, hi = hi, 2 * hi
        if hi > 1e300:
            raise ResolutionError("bisection bracket for a_N diverged")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if tail(mid).mean() >= target:
            lo = mid
        else:
            hi = mid
    vals = tail(hi)
    rel = vals.std(ddof=1) / math.sqrt(budget) / target
    if not rel <= max_rel_stderr:
        raise ResolutionError(
            f"sample_budget={budget} cannot resolve a_N at N={N}: relative standard "
            f"error of the tail estimate is {rel:.3g} > {max_rel_stderr}")
    # translate tail-probability uncertainty into a_N uncertainty via the local slope
    y2 = hi * (1 + 1e-2)
    slope = (tail(y2).mean() - vals.mean()) / (y2 - hi)
    se_a = abs(rel * target / slope) if slope != 0 else math.inf
    return NormingSequences(N, float(hi), "monte-carlo", float(hi), asym, float(se_a))


@dataclass(frozen=True)
class TruncatedMoment:
    """``b_N = E[L_1^2 1{|L_1| <= a_N}]`` with the Karamata diagnostic."""

    a_N: float
    b_N: float
    stderr: float
    sigma2: float
    karamata: Optional[float]


def norming_b(model: LevyModel, a_N: float, sample_budget: int = 1_000_000, seed=0,
              N: Optional[int] = None) -> TruncatedMoment:
    """Truncated second moment ``b_N`` and ``(N/a_N^2)(sigma^2 - b_N)``.

    ``sigma^2 - b_N = E[L^2 1{|L| > a_N}]`` is estimated with the
    largest-jump conditional estimator, so ``b_N <= sigma^2`` holds for
    every draw.  The Karamata diagnostic is reported when ``N`` is given.
    """
    if not a_N >= 0:
        raise ParameterError("a_N must be nonnegative")
    s2 = variance(model)
    if a_N == 0:
        return TruncatedMoment(0.0, 0.0, 0.0, s2, None if N is None else math.inf)
    budget = _check_budget(sample_budget)
    cs = _conditional_sample(model, budget, make_rng(seed))
    excess = _largest_jump_terms(model, cs, a_N, 2)
    ex = float(excess.mean())
    se = float(excess.std(ddof=1) / math.sqrt(budget))
    b = s2 - ex
    kar = None if N is None else N / a_N ** 2 * ex
    return TruncatedMoment(float(a_N), b, se, s2, kar)


def norming_sequences(model: LevyModel, N: int, sample_budget: Optional[int] = None,
                      seed=0) -> NormingSequences:
    """``a_N`` (Monte Carlo and asymptotic) together with ``b_N`` and the Karamata ratio."""
    na = norming_a(model, N, sample_budget, seed=seed)
    tb = norming_b(model, na.a_N, sample_budget or min(100 * N, _DEFAULT_MAX_BUDGET),
                   seed=(seed, 1) if isinstance(seed, int) else seed, N=N)
    return NormingSequences(na.N, na.a_N, na.method, na.a_N_mc, na.a_N_asymptotic,
                            na.a_N_stderr, tb.b_N, tb.karamata)


def ensure_heavy_tailed(model: LevyModel) -> None:
    """Raise :class:`DomainError` unless the model is pure-jump with alpha in (2, 4)."""
    if not model.is_heavy_tailed_admissible():
        raise DomainError("stable-regime quantities need a pure-jump model with unbounded "
                          "symmetric jumps and alpha in (2, 4)")
