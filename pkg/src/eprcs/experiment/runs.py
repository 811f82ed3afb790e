"""Run directories: simulate, reconstruct, analyze, sweep and replay.

A run directory holds everything needed to repeat or extend a run::

    config.txt            resolved flat config
    manifest.json         run id, timestamp, seeds, stages, sha256 per artifact
    state.epra            biphoton amplitude, shape (2, n, n): real, imaginary
    position_joint.epra   ground-truth joints, shape (n, n)
    momentum_joint.epra
    plan.json             sensing plan
    measurements.epra     rows y_momentum, y_position, totals, valid; shape (4, M)
    counts.epra           raw 16-port records, shape (M, 4, 4)
                          (probabilities.epra instead for infinite flux)
    recon_position.epra   reconstructions, shape (n, n)
    recon_momentum.epra
    diagnostics.json      solver diagnostics
    analysis.csv          one row per threshold

The in-memory helpers used here are shared with :func:`run_cell`, so a
sweep cell and the same cell run through the run-directory commands give
bit-identical numbers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..entropy_analysis import mse, mutual_information, steering_witness, threshold_normalize
from ..errors import AllZero, ConfigError, Diverged, MissingArtifact
from ..measurement_pipeline import MeasurementVectors, exact_port_probabilities, run_acquisition
from ..random_filters import SensingOperator, SensingPlan, plan_sensing
from ..spdc_model import (
    MOMENTUM,
    POSITION,
    BiphotonAmplitude,
    GridSpec,
    balanced_grid,
    build_state,
    choose_grid,
    momentum_joint,
    position_joint,
)
from ..tv_solver import tv_min
from .arrayio import read_array, sha256_file, write_array
from .config import ExperimentConfig, parse_text

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
CONFIG = "config.txt"
ANALYSIS_COLUMNS = [
    "threshold[fraction of max]",
    "H(X1|X2)[bits]",
    "H(K1|K2)[bits]",
    "bound[bits]",
    "violation[bits]",
    "I_x[bits]",
    "I_k[bits]",
    "mse_x[prob^2]",
    "mse_k[prob^2]",
    "flag",
]
# axis convention of counts.epra and probabilities.epra, stored in the manifest
RECORD_LAYOUT = {
    "axes": ["measurement", "position_combo", "momentum_combo"],
    "combos": ["TT", "TR", "RT", "RR"],
}
DOMAIN_FILES = {POSITION: "recon_position.epra", MOMENTUM: "recon_momentum.epra"}


# -- in-memory pipeline --------------------------------------------------
def build_grid(cfg: ExperimentConfig) -> GridSpec:
    if cfg.grid.mode == "balanced":
        return balanced_grid(cfg.spdc, cfg.grid.n)
    return choose_grid(cfg.spdc, cfg.grid.n, cfg.grid.coverage_sigmas)


@dataclass
class Simulation:
    state: BiphotonAmplitude
    plan: SensingPlan
    measurements: MeasurementVectors
    probabilities: np.ndarray | None = None


def simulate(cfg: ExperimentConfig) -> Simulation:
    grid = build_grid(cfg)
    state = build_state(cfg.spdc, grid)
    n = cfg.grid.n
    plan = plan_sensing(n, cfg.plan.M, cfg.plan.seed, oversample=cfg.plan.oversample and cfg.plan.M > n * n)
    sim = cfg.sim
    mv = run_acquisition(state, plan, sim.mean_flux, sim.seed, sim.order, sim.efficiency, sim.dark_counts)
    probs = exact_port_probabilities(state, plan, sim.order) if math.isinf(sim.mean_flux) else None
    empty = int(np.sum(~mv.valid))
    if empty:
        log.warning("%d of %d filter sets recorded no coincidences at flux %g", empty, plan.M, sim.mean_flux)
    return Simulation(state, plan, mv, probs)


def reconstruct(cfg: ExperimentConfig, plan: SensingPlan, mv: MeasurementVectors) -> dict:
    """Solve both domains; returns ``{domain: ReconstructionResult}``."""
    if not np.any(mv.valid):
        raise ValueError("no filter set recorded a coincidence; nothing to reconstruct")
    out = {}
    for domain in (POSITION, MOMENTUM):
        op = SensingOperator(plan, domain, mv.valid)
        try:
            out[domain] = tv_min(mv.vector(domain)[mv.valid], op, cfg.solver)
        except Diverged as exc:
            raise Diverged(f"{domain} solve diverged: {exc}\nsolver config:\n{_section_dump(cfg, 'solver')}") from exc
    return out


def _section_dump(cfg: ExperimentConfig, section: str) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_flat().items() if k.startswith(section + "."))


def analysis_rows(truth: dict, images: dict, grid: GridSpec, thresholds, dims: int) -> list[dict]:
    """One dict per threshold with the :data:`ANALYSIS_COLUMNS` quantities.

    ``truth`` and ``images`` map domains to ``(n, n)`` arrays. Thresholds
    that leave nothing in a domain give NaN entries and a ``flag``.
    """
    rows = []
    for t in thresholds:
        row = dict.fromkeys(ANALYSIS_COLUMNS, math.nan)
        row["threshold[fraction of max]"] = float(t)
        row["flag"] = ""
        dists = {}
        for domain in (POSITION, MOMENTUM):
            try:
                dists[domain] = threshold_normalize(images[domain], t, grid, domain)
            except AllZero:
                row["flag"] = (row["flag"] + ";" if row["flag"] else "") + f"all_zero:{domain}"
        if POSITION in dists:
            row["I_x[bits]"] = mutual_information(dists[POSITION])
            row["mse_x[prob^2]"] = mse(dists[POSITION], truth[POSITION])
        if MOMENTUM in dists:
            row["I_k[bits]"] = mutual_information(dists[MOMENTUM])
            row["mse_k[prob^2]"] = mse(dists[MOMENTUM], truth[MOMENTUM])
        if len(dists) == 2:
            rep = steering_witness(dists[POSITION], dists[MOMENTUM], dims, dx=grid.dx, dk=grid.dk)
            row.update({
                "H(X1|X2)[bits]": rep.h_x_cond,
                "H(K1|K2)[bits]": rep.h_k_cond,
                "bound[bits]": rep.bound,
                "violation[bits]": rep.violation,
            })
        rows.append(row)
    return rows


# -- run directory helpers -----------------------------------------------
def _run_id(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(cfg.dumps().encode()).hexdigest()[:16]


def _read_manifest(run_dir: Path) -> dict:
    path = run_dir / MANIFEST
    if not path.is_file():
        raise MissingArtifact(f"missing artifact {MANIFEST} in {run_dir}")
    return json.loads(path.read_text())


def _write_manifest(run_dir: Path, manifest: dict) -> None:
    (run_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _record(run_dir: Path, manifest: dict, names) -> None:
    for name in names:
        manifest["artifacts"][name] = sha256_file(run_dir / name)


def load_run_config(run_dir) -> ExperimentConfig:
    run_dir = Path(run_dir)
    path = run_dir / CONFIG
    if not path.is_file():
        raise MissingArtifact(f"missing artifact {CONFIG} in {run_dir}")
    return parse_text(path.read_text())


def load_plan(run_dir) -> SensingPlan:
    path = Path(run_dir) / "plan.json"
    if not path.is_file():
        raise MissingArtifact(f"missing artifact plan.json in {Path(run_dir)}")
    return SensingPlan.loads(path.read_text())


def load_measurements(run_dir) -> MeasurementVectors:
    a = read_array(Path(run_dir) / "measurements.epra")
    return MeasurementVectors(a[0].copy(), a[1].copy(), a[2].copy(), a[3] > 0)


def load_truth(run_dir) -> dict:
    run_dir = Path(run_dir)
    return {
        POSITION: read_array(run_dir / "position_joint.epra"),
        MOMENTUM: read_array(run_dir / "momentum_joint.epra"),
    }


# -- commands --------------------------------------------------------------
def cmd_simulate(cfg: ExperimentConfig, out_dir) -> Path:
    """Simulate one acquisition and persist it as a run directory."""
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    result = simulate(cfg)
    st, mv = result.state, result.measurements
    (run_dir / CONFIG).write_text(cfg.dumps())
    write_array(run_dir / "state.epra", np.stack((st.values.real, st.values.imag)))
    write_array(run_dir / "position_joint.epra", position_joint(st).values)
    write_array(run_dir / "momentum_joint.epra", momentum_joint(st).values)
    (run_dir / "plan.json").write_text(result.plan.dumps())
    write_array(run_dir / "measurements.epra", np.stack((mv.y_momentum, mv.y_position, mv.totals, mv.valid.astype(float))))
    names = [CONFIG, "state.epra", "position_joint.epra", "momentum_joint.epra", "plan.json", "measurements.epra"]
    if mv.counts is not None:
        write_array(run_dir / "counts.epra", mv.counts.astype(float))
        names.append("counts.epra")
    else:
        write_array(run_dir / "probabilities.epra", result.probabilities)
        names.append("probabilities.epra")
    grid = st.grid
    manifest = {
        "run_id": _run_id(cfg),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": cfg.to_flat(),
        "grid": {"n": grid.n, "dx": grid.dx, "dk": grid.dk},
        "seeds": {"plan": cfg.plan.seed, "acquisition": cfg.sim.seed},
        "record_layout": RECORD_LAYOUT,
        "stages": {"simulate": {"empty_records": int(np.sum(~mv.valid))}},
        "artifacts": {},
    }
    _record(run_dir, manifest, names)
    _write_manifest(run_dir, manifest)
    return run_dir


def cmd_reconstruct(run_dir, overrides: dict | None = None) -> Path:
    """Reconstruct both joints of a simulated run.

    ``overrides`` maps ``solver.*`` keys to values (or strings to parse).
    """
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    cfg = load_run_config(run_dir)
    overrides = dict(overrides or {})
    bad = [k for k in overrides if not k.startswith("solver.")]
    if bad:
        raise ConfigError(f"reconstruct accepts solver overrides only, got {bad}")
    cfg = cfg.with_overrides(overrides)
    plan = load_plan(run_dir)
    mv = load_measurements(run_dir)
    results = reconstruct(cfg, plan, mv)
    diagnostics = {}
    for domain, res in results.items():
        write_array(run_dir / DOMAIN_FILES[domain], res.image())
        diagnostics[domain] = {
            "final_residual": res.final_residual,
            "final_tv": res.final_tv,
            "iterations": res.iterations,
            "converged": res.converged,
        }
    (run_dir / "diagnostics.json").write_text(json.dumps(diagnostics, indent=2, sort_keys=True) + "\n")
    manifest["stages"]["reconstruct"] = {
        "overrides": {k: v for k, v in cfg.to_flat().items() if k in overrides},
    }
    _record(run_dir, manifest, [*DOMAIN_FILES.values(), "diagnostics.json"])
    _write_manifest(run_dir, manifest)
    return run_dir


def cmd_analyze(run_dir, thresholds=None, exact: bool = False) -> tuple[Path, list[dict]]:
    """Write ``analysis.csv`` (or ``analysis_exact.csv`` when ``exact``).

    With ``exact`` the ground-truth joints stand in for the reconstructions.
    """
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    cfg = load_run_config(run_dir)
    thresholds = cfg.analysis.thresholds if thresholds is None else tuple(thresholds)
    truth = load_truth(run_dir)
    images = truth if exact else {d: read_array(run_dir / f) for d, f in DOMAIN_FILES.items()}
    g = manifest["grid"]
    grid = GridSpec(g["n"], g["dx"], g["dk"])
    rows = analysis_rows(truth, images, grid, thresholds, cfg.analysis.dims)
    name = "analysis_exact.csv" if exact else "analysis.csv"
    write_csv(run_dir / name, ANALYSIS_COLUMNS, rows)
    manifest["stages"]["analyze_exact" if exact else "analyze"] = {"thresholds": list(thresholds)}
    _record(run_dir, manifest, [name])
    _write_manifest(run_dir, manifest)
    return run_dir / name, rows


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c, "")) for c in columns])


def _cell(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- sweep -----------------------------------------------------------------
def _flux_key(flux: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(flux)))[0]


def cell_seeds(master_seed: int, M: int, flux: float, trial: int) -> tuple[int, int]:
    """Plan and acquisition seeds of a sweep cell, a pure function of its coordinates."""
    ss = np.random.SeedSequence([int(master_seed), int(M), _flux_key(flux), int(trial)])
    plan_seed, sim_seed = ss.generate_state(2, dtype=np.uint32)
    return int(plan_seed), int(sim_seed)


def cell_config(cfg: ExperimentConfig, M: int, flux: float, trial: int) -> ExperimentConfig:
    plan_seed, sim_seed = cell_seeds(cfg.sweep.master_seed, M, flux, trial)
    return cfg.with_overrides({
        "plan.M": int(M),
        "plan.seed": plan_seed,
        "sim.mean_flux": float(flux),
        "sim.seed": sim_seed,
    })


def run_cell(cfg: ExperimentConfig, M: int, flux: float, trial: int) -> dict:
    """Simulate, reconstruct and analyze one sweep cell in memory."""
    ccfg = cell_config(cfg, M, flux, trial)
    result = simulate(ccfg)
    recs = reconstruct(ccfg, result.plan, result.measurements)
    truth = {POSITION: position_joint(result.state).values, MOMENTUM: momentum_joint(result.state).values}
    images = {d: r.image() for d, r in recs.items()}
    grid = result.state.grid
    sweep_row = analysis_rows(truth, images, grid, [cfg.sweep.threshold], cfg.analysis.dims)[0]
    return {
        "M": int(M),
        "flux": float(flux),
        "trial": int(trial),
        "plan_seed": ccfg.plan.seed,
        "sim_seed": ccfg.sim.seed,
        "mse_position": mse(images[POSITION], truth[POSITION]),
        "mse_momentum": mse(images[MOMENTUM], truth[MOMENTUM]),
        "zero_mse_position": float(np.mean(truth[POSITION] ** 2)),
        "zero_mse_momentum": float(np.mean(truth[MOMENTUM] ** 2)),
        "violation": sweep_row["violation[bits]"],
        "entropy_sum": sweep_row["H(X1|X2)[bits]"] + sweep_row["H(K1|K2)[bits]"],
        "bound": sweep_row["bound[bits]"],
        "iterations_position": recs[POSITION].iterations,
        "iterations_momentum": recs[MOMENTUM].iterations,
        "thresholds": analysis_rows(truth, images, grid, cfg.analysis.thresholds, cfg.analysis.dims),
        "error": "",
    }


def _safe_cell(cfg, M, flux, trial) -> dict:
    try:
        return run_cell(cfg, M, flux, trial)
    except Exception as exc:  # recorded per cell; the sweep carries on
        log.warning("cell M=%s flux=%s trial=%s failed: %s", M, flux, trial, exc)
        return {"M": int(M), "flux": float(flux), "trial": int(trial), "error": f"{type(exc).__name__}: {exc}"}


TRIAL_COLUMNS = [
    "M[rows]", "flux[coincidences per filter set]", "trial", "plan_seed", "sim_seed",
    "mse_position[prob^2]", "mse_momentum[prob^2]", "entropy_sum[bits]", "bound[bits]", "violation[bits]",
    "iterations_position", "iterations_momentum", "error",
]
THRESHOLD_COLUMNS = ["M[rows]", "flux[coincidences per filter set]", "trial"] + ANALYSIS_COLUMNS
OBSERVABLES = {
    "mse_position": "prob^2",
    "mse_momentum": "prob^2",
    "violation": "bits",
    "entropy_sum": "bits",
}


def transition_flux(cells: list[dict], domain: str, M: int, fraction: float) -> float:
    """Lowest swept flux from which the mean MSE of ``domain`` at ``M`` stays
    below ``fraction`` times the MSE of the all-zero estimate; ``inf`` if the
    sweep never gets there."""
    fluxes = sorted({c["flux"] for c in cells if c["M"] == M})
    below = []
    for f in fluxes:
        ok = [c for c in cells if c["M"] == M and c["flux"] == f and not c["error"]]
        if not ok:
            below.append(False)
            continue
        mean = np.mean([c[f"mse_{domain}"] for c in ok])
        zero = ok[0][f"zero_mse_{domain}"]
        below.append(bool(mean <= fraction * zero))
    for i, f in enumerate(fluxes):
        if all(below[i:]):
            return float(f)
    return math.inf


def cmd_sweep(cfg: ExperimentConfig, out_dir, threads: int = 1) -> tuple[Path, list[dict]]:
    """Run every ``(M, flux, trial)`` cell and write the sweep CSVs.

    Outputs ``trials.csv`` (one row per cell), ``thresholds.csv`` (one row
    per cell and analysis threshold), one ``<observable>.csv`` per
    observable (mean and standard deviation over trials per ``(M, flux)``)
    and ``transition_flux.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sw = cfg.sweep
    coords = [(int(M), float(f), t) for M in sw.M for f in sw.flux for t in range(sw.trials)]
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        cells = list(pool.map(lambda c: _safe_cell(cfg, *c), coords))

    trial_rows = []
    threshold_rows = []
    for c in cells:
        row = {
            "M[rows]": c["M"],
            "flux[coincidences per filter set]": c["flux"],
            "trial": c["trial"],
            "error": c["error"],
        }
        if not c["error"]:
            row.update({
                "plan_seed": c["plan_seed"],
                "sim_seed": c["sim_seed"],
                "mse_position[prob^2]": c["mse_position"],
                "mse_momentum[prob^2]": c["mse_momentum"],
                "entropy_sum[bits]": c["entropy_sum"],
                "bound[bits]": c["bound"],
                "violation[bits]": c["violation"],
                "iterations_position": c["iterations_position"],
                "iterations_momentum": c["iterations_momentum"],
            })
            for t in c["thresholds"]:
                threshold_rows.append({"M[rows]": c["M"], "flux[coincidences per filter set]": c["flux"], "trial": c["trial"], **t})
        trial_rows.append(row)
    write_csv(out / "trials.csv", TRIAL_COLUMNS, trial_rows)
    write_csv(out / "thresholds.csv", THRESHOLD_COLUMNS, threshold_rows)

    for name, unit in OBSERVABLES.items():
        rows = []
        for M in sw.M:
            for f in sw.flux:
                vals = [c[name] for c in cells if c["M"] == M and c["flux"] == f and not c["error"]]
                failed = sum(1 for c in cells if c["M"] == M and c["flux"] == f and c["error"])
                rows.append({
                    "M[rows]": int(M),
                    "flux[coincidences per filter set]": float(f),
                    f"mean[{unit}]": float(np.mean(vals)) if vals else math.nan,
                    f"std[{unit}]": float(np.std(vals)) if vals else math.nan,
                    "trials_ok": len(vals),
                    "trials_failed": failed,
                })
        write_csv(out / f"{name}.csv", list(rows[0]), rows)

    tf_rows = [
        {
            "M[rows]": int(M),
            "transition_flux_position[coincidences per filter set]": transition_flux(cells, "position", M, sw.transition_fraction),
            "transition_flux_momentum[coincidences per filter set]": transition_flux(cells, "momentum", M, sw.transition_fraction),
        }
        for M in sw.M
    ]
    write_csv(out / "transition_flux.csv", list(tf_rows[0]), tf_rows)

    (out / CONFIG).write_text(cfg.dumps())
    names = [CONFIG, "trials.csv", "thresholds.csv", "transition_flux.csv", *(f"{n}.csv" for n in OBSERVABLES)]
    manifest = {
        "run_id": _run_id(cfg),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": cfg.to_flat(),
        "seeds": {"master": sw.master_seed, "cells": {f"{M},{f!r},{t}": list(cell_seeds(sw.master_seed, M, f, t)) for M, f, t in coords}},
        "stages": {"sweep": {"cells": len(cells), "failed": sum(1 for c in cells if c["error"])}},
        "artifacts": {},
    }
    _record(out, manifest, names)
    _write_manifest(out, manifest)
    return out, cells


# -- replay ------------------------------------------------------------------
NUMERIC_ARTIFACTS = (
    "state.epra", "position_joint.epra", "momentum_joint.epra", "plan.json", "measurements.epra",
    "counts.epra", "probabilities.epra", "recon_position.epra", "recon_momentum.epra",
)


def replay(run_dir, scratch=None) -> list[str]:
    """Re-execute a run from its manifest and config; return the names of
    numerical artifacts whose bytes differ (empty when bit-identical)."""
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    cfg = load_run_config(run_dir)
    with tempfile.TemporaryDirectory(dir=scratch) as tmp:
        again = cmd_simulate(cfg, Path(tmp) / "replay")
        stage = manifest["stages"].get("reconstruct")
        if stage is not None:
            cmd_reconstruct(again, stage.get("overrides", {}))
        mismatched = []
        for name in NUMERIC_ARTIFACTS:
            if name not in manifest["artifacts"]:
                continue
            original = run_dir / name
            if not original.is_file():
                raise MissingArtifact(f"missing artifact {name} in {run_dir}")
            if sha256_file(original) != manifest["artifacts"][name] or sha256_file(again / name) != manifest["artifacts"][name]:
                mismatched.append(name)
    return mismatched
