"""Run-directory orchestration: configure, simulate, reconstruct, analyze, sweep."""

from .config import ExperimentConfig, load as load_config, parse_text
from .runs import cmd_analyze, cmd_reconstruct, cmd_simulate, cmd_sweep, replay, run_cell

__all__ = [
    "ExperimentConfig",
    "cmd_analyze",
    "cmd_reconstruct",
    "cmd_simulate",
    "cmd_sweep",
    "load_config",
    "parse_text",
    "replay",
    "run_cell",
]
