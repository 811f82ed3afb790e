"""Flat ``section.key = value`` experiment configuration.

One assignment per line; ``#`` starts a comment. Values are JSON
(numbers, ``true``/``false``, lists, quoted strings); ``inf`` and bare
identifiers such as ``momentum_first`` are accepted as well. Unknown keys
and values of the wrong type are errors, because a config file is part of
the record of an experiment.

Example::

    grid.n = 16
    grid.mode = balanced
    plan.M = 512
    sim.mean_flux = 4000
    sweep.M = [64, 128, 256]
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..photon_sim import MOMENTUM_FIRST, ORDERS
from ..spdc_model import REFERENCE_PARAMS, SpdcParams
from ..tv_solver import SolverConfig

GRID_MODES = ("balanced", "coverage")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class GridConfig:
    n: int = 16
    coverage_sigmas: float = 3.0
    # "coverage" sizes pixels so both domains span coverage_sigmas standard
    # deviations (needs a large n for realistic crystals); "balanced" gives
    # both domains the same coverage and always succeeds.
    mode: str = "balanced"


@dataclass(frozen=True)
class PlanConfig:
    M: int = 256
    seed: int = 1
    oversample: bool = True


@dataclass(frozen=True)
class SimConfig:
    mean_flux: float = 16000.0
    order: str = MOMENTUM_FIRST
    seed: int = 2
    efficiency: float = 1.0
    dark_counts: float = 0.0


@dataclass(frozen=True)
class AnalysisConfig:
    thresholds: tuple = (0.0, 0.02, 0.04, 0.06, 0.08, 0.10)
    dims: int = 1


@dataclass(frozen=True)
class SweepConfig:
    M: tuple = (64, 128, 256, 512, 1024, 2048)
    flux: tuple = (250.0, 1000.0, 4000.0, 16000.0)
    trials: int = 5
    master_seed: int = 0
    # threshold applied before the per-cell steering violation
    threshold: float = 0.05
    # a domain has transitioned once its mean MSE falls below this fraction
    # of the MSE of the all-zero estimate
    transition_fraction: float = 0.1


@dataclass(frozen=True)
class ExperimentConfig:
    spdc: SpdcParams = REFERENCE_PARAMS
    grid: GridConfig = field(default_factory=GridConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        validate(self)

    # -- flat view -----------------------------------------------------
    def to_flat(self) -> dict:
        out = {}
        for section in fields(self):
            sub = getattr(self, section.name)
            for f in fields(sub):
                value = getattr(sub, f.name)
                out[f"{section.name}.{f.name}"] = list(value) if isinstance(value, tuple) else value
        return out

    def dumps(self) -> str:
        return "".join(f"{key} = {_format(value)}\n" for key, value in self.to_flat().items())

    def with_overrides(self, assignments: dict) -> "ExperimentConfig":
        """Return a copy with ``{"section.key": value}`` assignments applied.

        String values are parsed like file values.
        """
        grouped: dict[str, dict] = {}
        for key, value in assignments.items():
            section, name = _split_key(key)
            if isinstance(value, str):
                value = _parse_value(value, key)
            grouped.setdefault(section, {})[name] = _coerce(section, name, value, key)
        try:
            return replace(self, **{s: replace(getattr(self, s), **kv) for s, kv in grouped.items()})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def _format(value) -> str:
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return json.dumps(value)


_SECTION_TYPES = {
    "spdc": SpdcParams,
    "grid": GridConfig,
    "plan": PlanConfig,
    "sim": SimConfig,
    "solver": SolverConfig,
    "analysis": AnalysisConfig,
    "sweep": SweepConfig,
}


def _split_key(key: str) -> tuple[str, str]:
    parts = key.strip().split(".")
    if len(parts) != 2 or parts[0] not in _SECTION_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    section, name = parts
    if name not in {f.name for f in fields(_SECTION_TYPES[section])}:
        raise ConfigError(f"unknown config key {key!r}")
    return section, name


def _parse_value(text: str, key: str):
    text = text.strip()
    if text in ("inf", "+inf"):
        return math.inf
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        if _IDENT.match(text):
            return text
        raise ConfigError(f"cannot parse value {text!r} for {key}") from None


def _coerce(section: str, name: str, value, key: str):
    default = getattr(getattr(_DEFAULTS, section), name)
    if name == "beta" and value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} expects true or false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} expects a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{key} expects a list of numbers, got {value!r}")
        return tuple(value)
    return value


def validate(cfg: ExperimentConfig) -> None:
    """Cross-field checks that the section dataclasses cannot do alone."""
    if cfg.grid.mode not in GRID_MODES:
        raise ConfigError(f"grid.mode must be one of {GRID_MODES}")
    if cfg.grid.n < 2 or cfg.grid.n & (cfg.grid.n - 1):
        raise ConfigError("grid.n must be a power of two >= 2")
    if not cfg.grid.coverage_sigmas > 0:
        raise ConfigError("grid.coverage_sigmas must be positive")
    if cfg.plan.M < 1:
        raise ConfigError("empty plan: plan.M must be at least 1")
    if cfg.sim.order not in ORDERS:
        raise ConfigError(f"sim.order must be one of {ORDERS}")
    if not cfg.sim.mean_flux >= 0:
        raise ConfigError("sim.mean_flux must be non-negative")
    if not 0 < cfg.sim.efficiency <= 1:
        raise ConfigError("sim.efficiency must lie in (0, 1]")
    if cfg.sim.dark_counts < 0:
        raise ConfigError("sim.dark_counts must be non-negative")
    if not cfg.analysis.thresholds or any(not 0 <= t < 1 for t in cfg.analysis.thresholds):
        raise ConfigError("analysis.thresholds must be a non-empty list in [0, 1)")
    if cfg.analysis.dims < 1:
        raise ConfigError("analysis.dims must be positive")
    sw = cfg.sweep
    if not sw.M or not sw.flux or sw.trials < 1:
        raise ConfigError("sweep axes must be non-empty and sweep.trials positive")
    if any(int(m) != m or m < 1 for m in sw.M):
        raise ConfigError("sweep.M must hold positive integers")
    if any(f < 0 for f in sw.flux):
        raise ConfigError("sweep.flux must be non-negative")
    if not 0 <= sw.threshold < 1 or not 0 < sw.transition_fraction < 1:
        raise ConfigError("sweep.threshold must lie in [0, 1) and sweep.transition_fraction in (0, 1)")


_DEFAULTS = ExperimentConfig()


def parse_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    assignments = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in assignments:
            raise ConfigError(f"line {lineno}: {key} assigned twice")
        _split_key(key)
        assignments[key] = _parse_value(value, key)
    return (base or ExperimentConfig()).with_overrides(assignments)


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_text(text)
