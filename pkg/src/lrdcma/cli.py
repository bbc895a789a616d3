"""Command-line interface.

::

    lrdcma kernel table --config run.cfg --out out/
    lrdcma simulate --config run.cfg --out out/ [--dump-increments]
    lrdcma acv path.csv --H 5 [--config run.cfg] --out out/
    lrdcma limits sample --law {rosenblatt,stable,gdm} --n 1000 --config run.cfg --out out/
    lrdcma experiment run run.cfg --out out/
    lrdcma experiment sweep run.cfg --out out/
    lrdcma diagnostics --config run.cfg --out out/

Exit status is 0 on success, 1 for invalid input or configuration and 2 when
a numerical routine fails.  Outputs are assembled in memory and written only
after the command has succeeded, together with a ``manifest.json`` recording
the configuration hash, master seed, package version and file list.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import struct
import sys
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, levy
from .config import FullConfig, parse_config
from .errors import ConfigError, LrdcmaError, NumericError, ParameterError, ResolutionError
from .estimate import acv_sequence, classify_regime, estimate_d, sample_acf, sample_acv, theoretical_limits
from .kernel import StepKernel
from .limits import (RosenblattSampler, sample_integral_GdM, sample_stable, stable_limit_params)
from .mc import (cross_lag_coupling, hill_tail_index, ks_two_sample, moment_matched_gaussian,
                 quantile_matched, rate_regression, scale_factor, simulate_statistics, sweep)
from .simulate import Simulator

INCREMENT_MAGIC = b"LRDC"
INCREMENT_VERSION = 1

SUMMARY_KEYS = ("ks_to_rosenblatt", "ks_to_stable", "ks_to_gaussian", "hill_index",
                "rate_exponent", "cross_lag_corr")


class UsageError(Exception):
    """Raised by the argument parser instead of exiting."""

    def __init__(self, message: str, usage: str):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv(header: Sequence[str], rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode()


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


def increment_dump(z: np.ndarray, m: int) -> bytes:
    """Binary increment stream: ``b"LRDC"``, u32 version, u32 m, u64 count, f64 values (LE)."""
    z = np.ascontiguousarray(z, dtype="<f8")
    return INCREMENT_MAGIC + struct.pack("<IIQ", INCREMENT_VERSION, m, z.size) + z.tobytes()


def read_increment_dump(blob: bytes):
    """Inverse of :func:`increment_dump`; returns ``(m, values)``."""
    if blob[:4] != INCREMENT_MAGIC:
        raise ParameterError("not an increment dump (bad magic)")
    version, m, count = struct.unpack("<IIQ", blob[4:20])
    if version != INCREMENT_VERSION:
        raise ParameterError(f"unsupported increment dump version {version}")
    values = np.frombuffer(blob[20:], dtype="<f8")
    if values.size != count:
        raise ParameterError("increment dump is truncated")
    return m, values.astype(float)


def render_report(summary: dict) -> str:
    """Human-readable report of a JSON summary (a pure function of ``summary``)."""
    lines = [f"lrdcma report: {summary.get('command', 'run')}"]
    for key in sorted(summary):
        if key == "command":
            continue
        v = summary[key]
        if isinstance(v, float):
            v = f"{v:.6g}"
        elif isinstance(v, list) and v and isinstance(v[0], list):
            v = "; ".join(" ".join(f"{x:.4f}" if isinstance(x, float) else str(x) for x in row)
                          for row in v)
        elif isinstance(v, (list, dict)):
            v = json.dumps(v, sort_keys=True)
        elif v is None:
            v = "n/a"
        lines.append(f"  {key:<20s} {v}")
    return "\n".join(lines) + "\n"


def _write(out_dir: str, files: Dict[str, bytes], cfg: Optional[FullConfig], seed, command) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, blob in files.items():
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(blob)
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash() if cfg is not None else None,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "outputs": sorted(files),
    }
    with open(os.path.join(out_dir, "manifest.json"), "wb") as fh:
        fh.write(_json(manifest))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load(args, required: bool = True) -> Optional[FullConfig]:
    path = getattr(args, "config_file", None) or args.config
    if path is None:
        if required:
            raise ConfigError("a configuration file is required (--config)")
        return None
    cfg = parse_config(path)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def cmd_kernel_table(args, cfg: FullConfig):
    k = cfg.kernel
    t = np.linspace(0.0, args.t_max, args.points)
    gam = acv_sequence(k, levy.variance(cfg.model), args.lags)
    return {
        "kernel.csv": _csv(["t", "f"], zip(t, k(t))),
        "acv.csv": _csv(["h", "gamma"], zip(range(args.lags + 1), gam)),
    }, None


def cmd_simulate(args, cfg: FullConfig):
    grid = cfg.grid
    if args.dump_increments and not grid.retain_increments:
        from dataclasses import replace

        grid = replace(grid, retain_increments=True)
    sim = Simulator(cfg.kernel, cfg.model, grid)
    path = sim.sample(cfg["experiment.seed"])
    files = {"path.csv": _csv(["t", "X_t"], zip(range(1, path.values.size + 1), path.values))}
    if args.dump_increments:
        files["increments.bin"] = increment_dump(path.increments, grid.m)
    return files, None


def read_path_csv(path: str) -> np.ndarray:
    """Values of a path CSV: either ``t, X_t`` columns or a single column."""
    try:
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ParameterError(f"cannot read {path!r}: {exc.strerror}") from None
    if rows and not _is_number(rows[0][-1]):
        rows = rows[1:]
    try:
        vals = np.array([float(r[-1]) for r in rows])
    except ValueError:
        raise ParameterError(f"{path!r} contains non-numeric values") from None
    if vals.size == 0:
        raise ParameterError(f"{path!r} holds no values")
    return vals


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def cmd_acv(args, cfg: Optional[FullConfig]):
    x = read_path_csv(args.path)
    H = args.H
    if H >= x.size:
        raise ParameterError(f"H = {H} needs at least {H + 1} values")
    est = sample_acv(x, H)
    rho = sample_acf(est)
    gamma = [None] * (H + 1)
    regime = None
    if cfg is not None:
        gamma = list(acv_sequence(cfg.kernel, levy.variance(cfg.model), H))
        if cfg.kernel.long_memory:
            regime = classify_regime(cfg.kernel.d, cfg.model)
    d_hat = estimate_d(rho[1]) if H >= 1 else None
    rows = zip(range(H + 1), est.gamma_hat, gamma, rho)
    summary = _jsonable({"command": "acv", "N": est.N, "H": H, "d_hat": d_hat, "regime": regime})
    return {"acv.csv": _csv(["h", "gamma_hat", "gamma", "rho_hat"], rows),
            "summary.json": _json(summary)}, summary


def _stable_params(cfg: FullConfig):
    v = cfg.values
    if all(v[f"limit.{k}"] is not None for k in ("alpha", "tau", "beta", "mu")):
        return v["limit.alpha"], v["limit.tau"], v["limit.beta"], v["limit.mu"]
    levy.ensure_heavy_tailed(cfg.model)
    p = stable_limit_params(cfg.model)
    pick = lambda key, default: default if v[key] is None else v[key]
    return (pick("limit.alpha", p.alpha), pick("limit.tau", p.tau), pick("limit.beta", p.beta),
            pick("limit.mu", p.mu))


def cmd_limits_sample(args, cfg: FullConfig):
    law, n, seed = args.law, args.n, cfg["experiment.seed"]
    if n < 1:
        raise ParameterError("--n must be positive")
    if law == "rosenblatt":
        d = cfg["limit.d"] if cfg["limit.d"] is not None else cfg.kernel.d
        draws = RosenblattSampler(d, cfg["limit.n_grid"]).sample(n, seed)
    elif law == "stable":
        alpha, tau, beta, mu = _stable_params(cfg)
        draws = sample_stable(alpha / 2.0, tau, beta, mu, seed=seed, size=n)
    else:
        alpha, tau, beta, mu = _stable_params(cfg)
        kernel = StepKernel(cfg.kernel, cfg.grid.m) if cfg["experiment.target"] == "simulated" \
            else cfg.kernel
        draws = sample_integral_GdM(kernel, cfg["limit.h"], alpha, tau, beta, mu,
                                    n_grid=cfg["limit.n_grid"], seed=seed, size=n)
    draws = np.asarray(draws, dtype=float)
    if args.binary:
        return {"draws.bin": draws.astype("<f8").tobytes()}, None
    return {"draws.txt": "".join(_fmt(x) + "\n" for x in draws).encode()}, None


def _limit_kernel(cfg: FullConfig):
    return StepKernel(cfg.kernel, cfg.grid.m) if cfg["experiment.target"] == "simulated" \
        else cfg.kernel


def reference_samples(cfg: FullConfig, values: np.ndarray) -> Dict[str, np.ndarray]:
    """Reference draws for the three limit families.

    The family predicted for the configuration is drawn from its limit law
    (in the configured scaling, when it matches the law's own scaling);
    the other families are shape references, affinely matched to the median
    and interquartile range of ``values`` (moment-matched for the Gaussian).
    """
    exp = cfg.experiment
    n = cfg["experiment.reference_draws"]
    seed = (cfg["experiment.seed"], 0xFEED)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    kernel, model = cfg.kernel, cfg.model
    law = None
    if kernel.long_memory and exp.statistic == "acv_error":
        law = theoretical_limits(_limit_kernel(cfg), model, cfg.grid.H)
        if law.regime == "boundary" or law.scaling != exp.scaling:
            law = None
    lag = list(exp.lags)[:1]
    refs = {}
    if law is not None and law.gaussian_cov is not None:
        refs["gaussian"] = law.sample(n, rng, lags=lag)[:, 0]
    else:
        refs["gaussian"] = moment_matched_gaussian(values, n, rng)
    if law is not None and law.rosenblatt is not None:
        refs["rosenblatt"] = law.sample(n, rng, lags=lag, n_grid=cfg["limit.n_grid"])[:, 0]
    else:
        d_shape = cfg["limit.d"] if cfg["limit.d"] is not None else (
            kernel.d if kernel.long_memory and kernel.d > 0.25 else 0.35)
        shape = RosenblattSampler(d_shape, cfg["limit.n_grid"]).sample(n, rng)
        refs["rosenblatt"] = quantile_matched(shape, values)
    if law is not None and law.stable is not None:
        refs["stable"] = law.sample(n, rng, lags=lag, n_grid=min(cfg["limit.n_grid"], 512))[:, 0]
    else:
        alpha = model.alpha if model.is_heavy_tailed_admissible() else 2.5
        shape = sample_stable(alpha / 2.0, 1.0, 1.0, 0.0, seed=rng, size=n)
        refs["stable"] = quantile_matched(shape, values)
    return refs


def _with_threads(cfg: FullConfig, threads: int):
    from dataclasses import replace

    return replace(cfg.experiment, threads=threads)


def cmd_experiment_run(args, cfg: FullConfig):
    exp = _with_threads(cfg, args.threads)
    mat = simulate_statistics(exp)
    first = mat[:, 0]
    refs = reference_samples(cfg, first)
    R = first.size
    k_top = cfg["experiment.k_top"] or max(1, int(math.isqrt(R)))
    try:
        hill = hill_tail_index(first, k_top)
    except LrdcmaError:
        hill = None
    rate = None
    if cfg["experiment.N_list"]:
        fit = rate_regression({N: s[:, 0] for N, s in sweep(exp, cfg["experiment.N_list"]).items()})
        rate = fit.exponent
    summary = _jsonable({
        "command": "experiment run",
        "N": cfg.grid.N,
        "R": R,
        "scale_factor": scale_factor(exp),
        "ks_to_rosenblatt": ks_two_sample(first, refs["rosenblatt"]),
        "ks_to_stable": ks_two_sample(first, refs["stable"]),
        "ks_to_gaussian": ks_two_sample(first, refs["gaussian"]),
        "hill_index": hill,
        "rate_exponent": rate,
        "cross_lag_corr": cross_lag_coupling(mat),
        "lags": list(exp.lags),
    })
    header = ["replicate"] + [f"lag{h}" for h in exp.lags]
    rows = ([r] + list(row) for r, row in enumerate(mat))
    return {"draws.csv": _csv(header, rows), "summary.json": _json(summary),
            "report.txt": render_report(summary).encode()}, summary


def cmd_experiment_sweep(args, cfg: FullConfig):
    Ns = cfg["experiment.N_list"]
    if not Ns:
        raise ConfigError("experiment sweep needs experiment.N_list")
    exp = _with_threads(cfg, args.threads)
    res = sweep(exp, Ns)
    rows = []
    for N in sorted(res):
        for r, row in enumerate(res[N]):
            rows.append([N, r] + list(row))
    summary = {"command": "experiment sweep", "N_list": sorted(res)}
    try:
        fit = rate_regression({N: s[:, 0] for N, s in res.items()})
        summary.update(rate_exponent=fit.exponent, rate_stderr=fit.stderr, rate_ci=list(fit.ci),
                       iqr={str(k): v for k, v in fit.iqr.items()})
    except (ParameterError, NumericError) as exc:
        summary.update(rate_exponent=None, rate_note=str(exc))
    summary = _jsonable(summary)
    header = ["N", "replicate"] + [f"lag{h}" for h in exp.lags]
    return {"sweep.csv": _csv(header, rows), "summary.json": _json(summary),
            "report.txt": render_report(summary).encode()}, summary


def cmd_diagnostics(args, cfg: FullConfig):
    levy.ensure_heavy_tailed(cfg.model)
    Ns = cfg["experiment.N_list"] or (cfg.grid.N,)
    rows = []
    for N in Ns:
        ns = levy.norming_sequences(cfg.model, N, cfg["experiment.norming_budget"],
                                    seed=cfg["experiment.seed"])
        rows.append([N, ns.a_N_mc, ns.a_N_asymptotic, ns.b_N, ns.karamata])
    return {"norming.csv": _csv(["N", "a_N_mc", "a_N_asym", "b_N", "karamata_diag"], rows)}, None


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _default_threads() -> int:
    raw = os.environ.get("LRDCMA_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="configuration file (key = value lines)")
    common.add_argument("--seed", type=int, help="master seed (overrides experiment.seed)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help="worker threads (default: $LRDCMA_THREADS or 1)")

    p = _Parser(prog="lrdcma", description="Long-memory Lévy-driven moving averages.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    kern = sub.add_parser("kernel", help="kernel tables")
    ks = kern.add_subparsers(dest="action", required=True, parser_class=_Parser)
    t = ks.add_parser("table", parents=[common], help="CSV of f(t) and gamma(h)")
    t.add_argument("--t-max", type=float, default=10.0)
    t.add_argument("--points", type=int, default=1001)
    t.add_argument("--lags", type=int, default=50)
    t.set_defaults(func=cmd_kernel_table)

    s = sub.add_parser("simulate", parents=[common], help="simulate one path")
    s.add_argument("--dump-increments", action="store_true",
                   help="also write the increment stream to increments.bin")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("acv", parents=[common], help="sample autocovariances of a path CSV")
    a.add_argument("path")
    a.add_argument("--H", type=int, default=1)
    a.set_defaults(func=cmd_acv, config_optional=True)

    lim = sub.add_parser("limits", help="limit-law samplers")
    ls = lim.add_subparsers(dest="action", required=True, parser_class=_Parser)
    l = ls.add_parser("sample", parents=[common], help="draw from a limit law")
    l.add_argument("--law", choices=("rosenblatt", "stable", "gdm"), required=True)
    l.add_argument("--n", type=int, required=True)
    l.add_argument("--binary", action="store_true", help="write little-endian f64 values")
    l.set_defaults(func=cmd_limits_sample)

    ex = sub.add_parser("experiment", help="Monte Carlo experiments")
    es = ex.add_subparsers(dest="action", required=True, parser_class=_Parser)
    for name, fn in (("run", cmd_experiment_run), ("sweep", cmd_experiment_sweep)):
        e = es.add_parser(name, parents=[common])
        e.add_argument("config_file", nargs="?")
        e.set_defaults(func=fn)

    d = sub.add_parser("diagnostics", parents=[common], help="norming-sequence table")
    d.set_defaults(func=cmd_diagnostics)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line; returns the exit status."""
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"lrdcma: error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.threads < 1:
        sys.stderr.write("lrdcma: error: --threads must be positive\n")
        return 1
    command = " ".join(x for x in (args.command, getattr(args, "action", None)) if x)
    try:
        cfg = _load(args, required=not getattr(args, "config_optional", False))
        files, summary = args.func(args, cfg)
    except (ConfigError, ParameterError) as exc:
        sys.stderr.write(f"lrdcma: invalid input: {exc}\n")
        return 1
    except (NumericError, ResolutionError, ArithmeticError) as exc:
        sys.stderr.write(f"lrdcma: numeric failure: {exc}\n")
        return 2
    seed = cfg["experiment.seed"] if cfg is not None else None
    _write(args.out, files, cfg, seed, command)
    if summary is not None:
        sys.stdout.write(render_report(summary))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
