"""Monte Carlo harness: replicated statistics, distances and rate fits."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import levy
from .errors import ConfigError, DomainError, NumericError, ParameterError
from .estimate import classify_regime, estimate_d
from .kernel import Kernel, StepKernel
from .levy import LevyModel
from .rng import derive_seed, make_rng
from .simulate import SimulationGrid, Simulator, decompose

SCALINGS = ("n_pow", "n_over_aN2", "sqrt_n", "sqrt_n_over_log", "none")
STATISTICS = ("acv_error", "acf_error", "d_hat_error", "diag_part", "offdiag_part")


@dataclass(frozen=True)
class ExperimentConfig:
    """A replicated simulation of one scaled statistic.

    Parameters
    ----------
    kernel, model, grid
        What to simulate; ``grid.seed`` is ignored in favour of ``seed``.
    replicates : int
    scaling : str
        ``n_pow`` (with ``exponent``), ``n_over_aN2``, ``sqrt_n``,
        ``sqrt_n_over_log`` or ``none``.
    statistic : str
        ``acv_error``, ``acf_error``, ``d_hat_error``, ``diag_part`` or
        ``offdiag_part``.
    lags : tuple of int
        Lags evaluated on the same replicates (ignored by ``d_hat_error``).
    target : {"simulated", "kernel"}
        Centre errors at the exact mean of the simulated law, or at the
        continuous-kernel value.
    centering : {"sigma2", "b_N"}
        Diagonal centering for ``diag_part`` / ``offdiag_part``.
    allow_boundary : bool
        Permit configurations on a regime boundary.
    """

    kernel: Kernel
    model: LevyModel
    grid: SimulationGrid
    replicates: int = 1000
    scaling: str = "none"
    exponent: Optional[float] = None
    statistic: str = "acv_error"
    lags: Tuple[int, ...] = (0,)
    target: str = "simulated"
    centering: str = "sigma2"
    seed: int = 0
    threads: int = 1
    allow_boundary: bool = False
    norming_budget: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(h) for h in np.atleast_1d(self.lags)))
        problems = validate_experiment(self)
        if problems:
            raise ConfigError(problems)

    def describe(self) -> dict:
        g = self.grid
        return {
            "kernel": self.kernel.describe(),
            "model": {"brownian_sd": self.model.brownian_sd, "jump_rate": self.model.jump_rate,
                      "alpha": self.model.alpha, "x0": self.model.jump_scale,
                      "bounded_jumps": self.model.bounded_jumps},
            "grid": {"m": g.m, "N": g.N, "H": g.H, "K_trunc": g.K_trunc, "remote": g.remote},
            "replicates": self.replicates, "scaling": self.scaling, "exponent": self.exponent,
            "statistic": self.statistic, "lags": list(self.lags), "target": self.target,
            "centering": self.centering, "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()


def validate_experiment(cfg: ExperimentConfig) -> list:
    """List of problems with ``cfg`` (empty when valid)."""
    problems = []
    if cfg.replicates < 1:
        problems.append("replicates must be positive")
    if cfg.scaling not in SCALINGS:
        problems.append(f"scaling must be one of {SCALINGS}")
    if cfg.scaling == "n_pow" and cfg.exponent is None:
        problems.append("scaling n_pow needs an exponent")
    if cfg.statistic not in STATISTICS:
        problems.append(f"statistic must be one of {STATISTICS}")
    if cfg.target not in ("simulated", "kernel"):
        problems.append("target must be 'simulated' or 'kernel'")
    if cfg.centering not in ("sigma2", "b_N"):
        problems.append("centering must be 'sigma2' or 'b_N'")
    if any(h < 0 or h > cfg.grid.H for h in cfg.lags):
        problems.append("every lag must lie in [0, grid.H]")
    if cfg.statistic == "d_hat_error" and cfg.grid.H < 1:
        problems.append("d_hat_error needs grid.H >= 1")
    if cfg.statistic in ("diag_part", "offdiag_part"):
        if cfg.grid.remote != "none":
            problems.append("diagonal/off-diagonal statistics need grid.remote = none")
    if cfg.threads < 1:
        problems.append("threads must be positive")
    if cfg.kernel.long_memory:
        regime = classify_regime(cfg.kernel.d, cfg.model)
        if regime == "boundary" and not cfg.allow_boundary:
            problems.append(
                f"d = {cfg.kernel.d} lies on a regime boundary for this driver "
                "(d = 1/4 with finite fourth moment, or d = 1/alpha); no limit law is "
                "claimed there; set allow_boundary to run it anyway")
    return problems


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Sorted replicate values of one scaled statistic.

    ``per_lag`` holds the unsorted ``(R, len(lags))`` matrix with common
    random numbers across lags.
    """

    values: np.ndarray
    provenance: dict
    per_lag: Optional[np.ndarray] = field(default=None, compare=False)

    @property
    def R(self) -> int:
        return self.values.size

    def __eq__(self, other):
        return (isinstance(other, EmpiricalDistribution)
                and np.array_equal(self.values, other.values)
                and self.provenance == other.provenance)

    __hash__ = None


def scale_factor(cfg: ExperimentConfig) -> float:
    """``scale(N)`` for the configured scaling."""
    N = cfg.grid.N
    if cfg.scaling == "none":
        return 1.0
    if cfg.scaling == "sqrt_n":
        return math.sqrt(N)
    if cfg.scaling == "sqrt_n_over_log":
        return math.sqrt(N / math.log(N))
    if cfg.scaling == "n_pow":
        return float(N) ** cfg.exponent
    a = levy.norming_a(cfg.model, N, cfg.norming_budget, seed=cfg.seed).a_N
    return N / a ** 2


class _Runner:
    """Per-configuration state shared by all replicates."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        grid = cfg.grid
        need_inc = cfg.statistic in ("diag_part", "offdiag_part")
        self.sim = Simulator(cfg.kernel, cfg.model, replace(grid, retain_increments=need_inc))
        self.H = grid.H
        self.targets = self._targets()
        self.b_N = None
        if need_inc and cfg.centering == "b_N":
            ns = levy.norming_sequences(cfg.model, grid.N, cfg.norming_budget, seed=cfg.seed)
            self.b_N = ns.b_N

    def _targets(self) -> np.ndarray:
        cfg = self.cfg
        if cfg.target == "simulated":
            return self.sim.expected_acv(self.H)
        from .kernel import autocovariance

        base = self.sim.base
        s2 = levy.variance(cfg.model)
        return np.array([autocovariance(base, s2, h) for h in range(self.H + 1)])

    def raw(self, r: int) -> np.ndarray:
        """Unscaled statistic for replicate ``r`` at every configured lag."""
        cfg = self.cfg
        rng = make_rng(derive_seed(cfg.seed, cfg.grid.N, r))
        path = self.sim.sample(rng)
        x = path.values
        N = cfg.grid.N
        if cfg.statistic in ("diag_part", "offdiag_part"):
            out = []
            for h in cfg.lags:
                dec = decompose(path, h, self.b_N)
                out.append(dec.diagonal if cfg.statistic == "diag_part" else dec.off_diagonal)
            return np.array(out)
        gh = np.array([np.dot(x[:N], x[h:h + N]) for h in range(self.H + 1)]) / N
        if cfg.statistic == "acv_error":
            return np.array([gh[h] - self.targets[h] for h in cfg.lags])
        rho_t = self.targets / self.targets[0]
        rho = gh / gh[0]
        if cfg.statistic == "acf_error":
            return np.array([rho[h] - rho_t[h] for h in cfg.lags])
        d_t = estimate_d(rho_t[1]) if cfg.target == "simulated" else cfg.kernel.d
        return np.array([estimate_d(rho[1]) - d_t])


def simulate_statistics(cfg: ExperimentConfig, scaled: bool = True) -> np.ndarray:
    """``(R, n_lags)`` matrix of (scaled) statistics, in replicate order."""
    runner = _Runner(cfg)
    idx = range(cfg.replicates)
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            rows = list(pool.map(runner.raw, idx))
    else:
        rows = [runner.raw(r) for r in idx]
    out = np.array(rows)
    return out * scale_factor(cfg) if scaled else out


def run_experiment(cfg: ExperimentConfig) -> EmpiricalDistribution:
    """Replicate ``scale(N) * (statistic - target)``; sorted values of the first lag."""
    mat = simulate_statistics(cfg)
    prov = {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": _version()}
    return EmpiricalDistribution(np.sort(mat[:, 0]), prov, mat)


def _version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# distances, tails, rates
# ---------------------------------------------------------------------------

def ks_two_sample(a, b) -> float:
    """Two-sample Kolmogorov–Smirnov distance ``sup_x |F_a(x) - F_b(x)|``."""
    a = np.sort(np.asarray(getattr(a, "values", a), dtype=float).ravel())
    b = np.sort(np.asarray(getattr(b, "values", b), dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ParameterError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def hill_tail_index(sample, k_top: int) -> float:
    """Hill estimate of the tail index from the ``k_top`` largest ``|values|``."""
    x = np.abs(np.asarray(getattr(sample, "values", sample), dtype=float).ravel())
    if int(k_top) != k_top or k_top < 1:
        raise ParameterError("k_top must be a positive integer")
    if k_top >= x.size:
        raise ParameterError("k_top must be smaller than the sample size")
    top = np.sort(x)[::-1][:k_top + 1]
    if top[k_top] <= 0:
        raise DomainError("not enough positive values for the Hill estimator")
    h = float(np.mean(np.log(top[:k_top] / top[k_top])))
    if h <= 0:
        raise DomainError("degenerate sample: the top order statistics coincide")
    return 1.0 / h


@dataclass(frozen=True)
class RateFit:
    """Decay exponent of the spread of a statistic in ``N``."""

    exponent: float
    stderr: float
    ci: Tuple[float, float]
    iqr: Dict[int, float]


def _iqr_log_se(x: np.ndarray) -> float:
    """Standard error of ``log IQR`` from order-statistic density estimates."""
    x = np.sort(x)
    n = x.size
    k = max(2, int(round(n ** 0.6 / 2)))

    def q_and_inv_density(p):
        j = int(round(p * (n - 1)))
        lo, hi = max(0, j - k), min(n - 1, j + k)
        return x[j], (x[hi] - x[lo]) * n / (hi - lo)

    q1, s1 = q_and_inv_density(0.25)
    q3, s3 = q_and_inv_density(0.75)
    # Var(q_p) ~ p(1-p) s_p^2 / n; Cov(q_1/4, q_3/4) ~ (1/16) s1 s3 / n
    var = (3 / 16 * s1 ** 2 + 3 / 16 * s3 ** 2 - 2 / 16 * s1 * s3) / n
    iqr = q3 - q1
    return math.sqrt(max(var, 0.0)) / iqr


def rate_regression(results: Mapping[int, object]) -> RateFit:
    """Least-squares slope of ``log IQR`` against ``log N``; returns ``-slope``.

    Parameters
    ----------
    results : mapping
        ``N -> sample`` of the *unscaled* statistic.
    """
    Ns = sorted(results)
    if len(Ns) < 3:
        raise ParameterError("need at least three values of N")
    if Ns[-1] < 4 * Ns[0]:
        raise ParameterError("the values of N must span at least two octaves")
    logN, logI, w, iqrs = [], [], [], {}
    for N in Ns:
        x = np.asarray(getattr(results[N], "values", results[N]), dtype=float).ravel()
        q1, q3 = np.percentile(x, [25, 75])
        if not q3 > q1:
            raise NumericError(f"degenerate spread at N={N}")
        iqrs[N] = float(q3 - q1)
        se = _iqr_log_se(x)
        logN.append(math.log(N))
        logI.append(math.log(q3 - q1))
        w.append(1.0 / max(se, 1e-12) ** 2)
    X = np.column_stack([np.ones(len(Ns)), logN])
    W = np.diag(w)
    cov = np.linalg.inv(X.T @ W @ X)
    beta = cov @ X.T @ W @ np.asarray(logI)
    slope, se = float(beta[1]), float(math.sqrt(cov[1, 1]))
    return RateFit(-slope, se, (-slope - 1.96 * se, -slope + 1.96 * se), iqrs)


def cross_lag_coupling(per_lag) -> np.ndarray:
    """Pearson correlation matrix of scaled errors across lags (columns)."""
    x = np.asarray(getattr(per_lag, "per_lag", per_lag), dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] == 1:
        return np.ones((1, 1))
    return np.corrcoef(x, rowvar=False)


# ---------------------------------------------------------------------------
# reference laws
# ---------------------------------------------------------------------------

def moment_matched_gaussian(sample, size: int, seed=0) -> np.ndarray:
    """Normal draws with the sample's mean and standard deviation."""
    x = np.asarray(sample, dtype=float)
    return make_rng(seed).normal(x.mean(), x.std(ddof=1), size)


def quantile_matched(reference, sample) -> np.ndarray:
    """Affine image of ``reference`` with the median and IQR of ``sample``."""
    ref = np.asarray(reference, dtype=float)
    x = np.asarray(sample, dtype=float)
    rq = np.percentile(ref, [25, 50, 75])
    sq = np.percentile(x, [25, 50, 75])
    return sq[1] + (ref - rq[1]) * (sq[2] - sq[0]) / (rq[2] - rq[0])


def ks_summary(values, references: Mapping[str, np.ndarray]) -> Dict[str, float]:
    """KS distance of ``values`` to each named reference sample."""
    return {name: ks_two_sample(values, ref) for name, ref in references.items()}


def sweep(cfg: ExperimentConfig, Ns: Sequence[int], scaled: bool = False) -> Dict[int, np.ndarray]:
    """Run ``cfg`` at several horizons; grids keep their mesh, lags and remote mode.

    ``K_trunc`` is rescaled in proportion to ``N + H``.
    """
    out = {}
    g = cfg.grid
    ratio = g.K_trunc / (g.m * (g.N + g.H))
    for N in Ns:
        K = int(math.ceil(ratio * g.m * (N + g.H)))
        c = replace(cfg, grid=replace(g, N=int(N), K_trunc=K))
        out[int(N)] = simulate_statistics(c, scaled=scaled)
    return out
