"""Flat ``key = value`` experiment configuration.

A configuration file holds one assignment per line, with dotted keys grouped
by section::

    # Rosenblatt regime
    kernel.variant = power_law
    kernel.d = 0.35
    levy.brownian_sd = 1
    grid.m = 4
    grid.N = 16384
    grid.H = 2
    grid.remote = gaussian
    experiment.replicates = 2000
    experiment.scaling = n_pow
    experiment.exponent = 0.3

Lists are comma separated; booleans accept ``true/false/yes/no/1/0``.  Every
problem found while parsing and validating is collected and reported in a
single :class:`~lrdcma.errors.ConfigError`.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

from .errors import ConfigError, LrdcmaError
from .estimate import classify_regime
from .kernel import DEFAULT_I_MAX, DEFAULT_QUAD_TOL, Kernel, make_kernel
from .levy import LevyModel
from .mc import ExperimentConfig
from .simulate import SimulationGrid, Simulator

_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(_int(x) for x in text.split(",") if x.strip())


def _optional(conv: Callable) -> Callable:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none", "auto") else conv(text)
    return parse


# key -> (converter, default)
SCHEMA: Dict[str, Tuple[Callable, object]] = {
    "levy.brownian_sd": (float, 1.0),
    "levy.jump_rate": (float, 0.0),
    "levy.alpha": (float, 2.5),
    "levy.x0": (float, 1.0),
    "levy.bounded_jumps": (_bool, False),
    "kernel.variant": (str, "power_law"),
    "kernel.d": (float, None),
    "kernel.C_d": (float, 1.0),
    "kernel.a": (_floats, None),
    "kernel.b": (_floats, None),
    "kernel.I_max": (_int, DEFAULT_I_MAX),
    "kernel.quad_tol": (float, DEFAULT_QUAD_TOL),
    "grid.m": (_int, 4),
    "grid.N": (_int, 1024),
    "grid.H": (_int, 0),
    "grid.K_trunc": (_optional(_int), None),
    "grid.retain_increments": (_bool, False),
    "grid.remote": (str, "none"),
    "grid.truncation_budget": (_optional(float), None),
    "limit.law": (str, None),
    "limit.n_grid": (_int, 1024),
    "limit.d": (float, None),
    "limit.alpha": (float, None),
    "limit.tau": (float, None),
    "limit.beta": (float, None),
    "limit.mu": (float, None),
    "limit.h": (_int, 0),
    "experiment.replicates": (_int, 1000),
    "experiment.scaling": (str, None),
    "experiment.exponent": (_optional(float), None),
    "experiment.statistic": (str, "acv_error"),
    "experiment.lags": (_ints, (0,)),
    "experiment.target": (str, "simulated"),
    "experiment.centering": (str, "sigma2"),
    "experiment.seed": (_int, 0),
    "experiment.allow_boundary": (_bool, False),
    "experiment.N_list": (_ints, None),
    "experiment.reference_draws": (_int, 5000),
    "experiment.k_top": (_optional(_int), None),
    "experiment.norming_budget": (_optional(_int), None),
}


@dataclass(frozen=True)
class FullConfig:
    """Jointly validated configuration of every module.

    Attributes
    ----------
    values : dict
        Every schema key with its parsed (or default) value.
    explicit : tuple of str
        Keys that were given in the source.
    kernel, model, grid
        Built objects.
    experiment : ExperimentConfig
    """

    values: Dict[str, object]
    explicit: Tuple[str, ...]
    kernel: Kernel
    model: LevyModel
    grid: SimulationGrid
    experiment: ExperimentConfig = field(repr=False)

    def __getitem__(self, key: str):
        return self.values[key]

    def semantic(self) -> Dict[str, object]:
        """All keys that influence results (JSON-compatible)."""
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(self.values.items())}

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_seed(self, seed: int) -> "FullConfig":
        vals = dict(self.values)
        vals["experiment.seed"] = int(seed)
        return build_config(vals, self.explicit)


def parse_text(text: str) -> Tuple[Dict[str, str], List[str]]:
    """Split ``text`` into raw assignments; returns ``(pairs, problems)``."""
    pairs: Dict[str, str] = {}
    problems: List[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            problems.append(f"unknown key {key!r} (line {lineno})")
            continue
        if key in pairs:
            problems.append(f"duplicate key {key!r} (line {lineno})")
        pairs[key] = value
    return pairs, problems


def _convert(pairs: Mapping[str, object], problems: List[str]) -> Dict[str, object]:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    for key, raw in pairs.items():
        if key not in SCHEMA:
            problems.append(f"unknown key {key!r}")
            continue
        conv = SCHEMA[key][0]
        if not isinstance(raw, str):
            values[key] = raw
            continue
        try:
            values[key] = conv(raw)
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    return values


def build_config(pairs: Mapping[str, object], explicit=None) -> FullConfig:
    """Validate ``pairs`` (raw strings or parsed values) jointly."""
    problems: List[str] = []
    values = _convert(pairs, problems)
    explicit = tuple(sorted(pairs)) if explicit is None else tuple(explicit)

    kernel = model = grid = experiment = None
    try:
        model = LevyModel(brownian_sd=values["levy.brownian_sd"], jump_rate=values["levy.jump_rate"],
                          jump_tail_index=values["levy.alpha"], jump_scale=values["levy.x0"],
                          bounded_jumps=values["levy.bounded_jumps"])
    except LrdcmaError as exc:
        problems.append(f"levy: {exc}")
    variant = str(values["kernel.variant"]).lower()
    if variant != "indicator" and values["kernel.d"] is None:
        problems.append("kernel.d is required")
    else:
        try:
            kernel = make_kernel(variant, values["kernel.d"], values["kernel.C_d"],
                                 values["kernel.a"], values["kernel.b"], values["kernel.quad_tol"])
        except LrdcmaError as exc:
            problems.append(f"kernel: {exc}")
    if values["kernel.I_max"] < 1:
        problems.append("kernel.I_max must be positive")
    if not values["kernel.quad_tol"] > 0:
        problems.append("kernel.quad_tol must be positive")
    try:
        grid = SimulationGrid(values["grid.m"], values["grid.N"], values["grid.H"],
                              values["grid.K_trunc"], values["experiment.seed"],
                              values["grid.retain_increments"], values["grid.remote"],
                              values["grid.truncation_budget"])
    except LrdcmaError as exc:
        problems.append(f"grid: {exc}")
    if values["experiment.N_list"] is not None and min(values["experiment.N_list"], default=0) < 1:
        problems.append("experiment.N_list entries must be positive")
    if values["experiment.reference_draws"] < 1:
        problems.append("experiment.reference_draws must be positive")
    if values["limit.law"] is not None and values["limit.law"] not in ("rosenblatt", "stable", "gdm"):
        problems.append("limit.law must be rosenblatt, stable or gdm")
    if values["limit.n_grid"] < 2:
        problems.append("limit.n_grid must be at least 2")

    if kernel is not None and model is not None:
        if kernel.long_memory and not values["experiment.allow_boundary"]:
            if classify_regime(kernel.d, model) == "boundary":
                problems.append(
                    f"d = {kernel.d} is a regime boundary for this driver (d = 1/4 with a finite "
                    "fourth moment, or d = 1/alpha for heavy tails); no limit law is claimed "
                    "there; set experiment.allow_boundary = true to override")
        if grid is not None:
            try:
                Simulator(kernel, model, grid)
            except LrdcmaError as exc:
                problems.append(f"grid: {exc}")
            scaling = values["experiment.scaling"] or "none"
            exponent = values["experiment.exponent"]
            try:
                experiment = ExperimentConfig(
                    kernel=kernel, model=model, grid=grid,
                    replicates=values["experiment.replicates"], scaling=scaling,
                    exponent=exponent, statistic=values["experiment.statistic"],
                    lags=values["experiment.lags"], target=values["experiment.target"],
                    centering=values["experiment.centering"], seed=values["experiment.seed"],
                    allow_boundary=values["experiment.allow_boundary"],
                    norming_budget=values["experiment.norming_budget"])
            except ConfigError as exc:
                # the boundary refusal is already reported above
                problems.extend(f"experiment: {p}" for p in exc.problems
                                if "regime boundary" not in p)
    if problems:
        raise ConfigError(problems)
    return FullConfig(values, explicit, kernel, model, grid, experiment)


def parse_config(source: Union[str, os.PathLike, Mapping[str, object]]) -> FullConfig:
    """Read and jointly validate a configuration.

    Parameters
    ----------
    source : path or mapping
        A file of ``key = value`` lines, or a mapping of keys to raw strings
        or parsed values.

    Raises
    ------
    ConfigError
        Listing every problem (unknown keys, bad values, violated invariants).
    """
    if isinstance(source, Mapping):
        return build_config(source)
    try:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {os.fspath(source)!r}: {exc.strerror}") from None
    pairs, problems = parse_text(text)
    try:
        cfg = build_config(pairs)
    except ConfigError as exc:
        raise ConfigError(problems + exc.problems) from None
    if problems:
        raise ConfigError(problems)
    return cfg


def dump_config(cfg: FullConfig) -> str:
    """Render every key of ``cfg`` back to the file format."""
    lines = []
    for key in sorted(cfg.values):
        v = cfg.values[key]
        if v is None:
            continue
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"
