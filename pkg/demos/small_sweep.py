"""
A small (M, flux) sweep
=======================

Runs two measurement counts at two flux levels with two trials each and
prints the averaged tables the full sweep writes as CSV files.
"""

import tempfile
from pathlib import Path

from eprcs.experiment import ExperimentConfig
from eprcs.experiment.runs import cmd_sweep, read_csv

cfg = ExperimentConfig().with_overrides({"sweep.M": [64, 512], "sweep.flux": [250, 4000], "sweep.trials": 2})

with tempfile.TemporaryDirectory() as tmp:
    out, cells = cmd_sweep(cfg, Path(tmp) / "sweep")
    for name in ("mse_momentum.csv", "entropy_sum.csv", "transition_flux.csv"):
        print(f"\n{name}")
        for row in read_csv(out / name):
            print("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
