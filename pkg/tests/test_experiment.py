import json
import math
import struct

import numpy as np
import pytest

from eprcs.errors import ConfigError, Diverged, MissingArtifact
from eprcs.entropy_analysis import steering_witness
from eprcs.experiment import ExperimentConfig, parse_text
from eprcs.experiment.arrayio import ArrayFormatError, decode, encode, read_array, write_array
from eprcs.experiment.cli import run as cli
from eprcs.experiment.config import load
from eprcs.experiment.runs import (
    ANALYSIS_COLUMNS,
    build_grid,
    cell_config,
    cell_seeds,
    cmd_analyze,
    cmd_reconstruct,
    cmd_simulate,
    cmd_sweep,
    load_measurements,
    load_plan,
    read_csv,
    replay,
    run_cell,
    transition_flux,
)
from eprcs.random_filters import apply_adjoint
from eprcs.spdc_model import build_state, momentum_joint, position_joint

SMALL = {"grid.n": 8, "plan.M": 32, "sim.mean_flux": 2000.0}


def small_cfg(**extra):
    return ExperimentConfig().with_overrides({**SMALL, **extra})


@pytest.fixture
def run_dir(tmp_path):
    return cmd_simulate(small_cfg(), tmp_path / "run")


# -- config --------------------------------------------------------------------

def test_parse_text():
    cfg = parse_text(
        """
        # comment line
        grid.n = 32          # trailing comment
        sim.order = position_first
        sim.mean_flux = inf
        sweep.M = [64, 128]
        solver.beta = null
        solver.nonnegativity = true
        """
    )
    assert cfg.grid.n == 32 and cfg.sim.order == "position_first"
    assert math.isinf(cfg.sim.mean_flux) and cfg.sweep.M == (64, 128)
    assert cfg.solver.beta is None and cfg.solver.nonnegativity is True
    assert cfg.solver.mu == 256.0


@pytest.mark.parametrize(
    "text, match",
    [
        ("grid.size = 4", "unknown config key"),
        ("nosection = 4", "unknown config key"),
        ("grid.n = 4\ngrid.n = 8", "twice"),
        ("grid.n = 4.5", "integer"),
        ("plan.oversample = 1", "true or false"),
        ("sim.mean_flux = many things", "cannot parse"),
        ("grid.n", "expected"),
        ("grid.n = 12", "power of two"),
        ("sim.order = sideways", "sim.order"),
        ("plan.M = 0", "empty plan"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_text(text)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig().with_overrides({"sim.mean_flux": math.inf, "solver.beta": None, "grid.mode": "coverage"})
    assert parse_text(cfg.dumps()) == cfg
    path = tmp_path / "c.txt"
    path.write_text(cfg.dumps())
    assert load(path) == cfg
    with pytest.raises(ConfigError):
        load(tmp_path / "absent.txt")


# -- arrayio -------------------------------------------------------------------

@pytest.mark.parametrize("shape", [(), (5,), (3, 4), (2, 3, 4), (1, 2, 3, 2)])
def test_array_round_trip(tmp_path, rng, shape):
    a = rng.normal(size=shape)
    digest = write_array(tmp_path / "a.epra", a)
    assert len(digest) == 64
    b = read_array(tmp_path / "a.epra")
    assert b.shape == a.shape and np.array_equal(a, b)


def test_array_header_layout():
    data = encode(np.arange(6.0).reshape(2, 3))
    assert data[:4] == b"EPRA"
    assert struct.unpack_from("<II4I", data, 4) == (1, 2, 2, 3, 0, 0)
    assert len(data) == 32 + 48
    assert np.frombuffer(data[32:], "<f8").tolist() == list(range(6))


def test_array_format_errors(tmp_path):
    good = encode(np.ones(3))
    with pytest.raises(ArrayFormatError, match="magic"):
        decode(b"NOPE" + good[4:])
    with pytest.raises(ArrayFormatError):
        decode(good[:-8])
    with pytest.raises(ArrayFormatError):
        encode(np.ones((1,) * 5))
    with pytest.raises(ArrayFormatError):
        encode(np.ones(2, complex))
    with pytest.raises(MissingArtifact, match="b.epra"):
        read_array(tmp_path / "b.epra")


# -- simulate ------------------------------------------------------------------

def test_simulate_layout(run_dir):
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert set(manifest) >= {"run_id", "timestamp", "config", "grid", "seeds", "stages", "artifacts"}
    assert manifest["record_layout"]["combos"] == ["TT", "TR", "RT", "RR"]
    for name in ("state.epra", "plan.json", "measurements.epra", "counts.epra", "config.txt"):
        assert name in manifest["artifacts"]
    assert read_array(run_dir / "measurements.epra").shape == (4, 32)
    assert read_array(run_dir / "state.epra").shape == (2, 8, 8)


def test_simulate_deterministic(tmp_path):
    a = cmd_simulate(small_cfg(), tmp_path / "a")
    b = cmd_simulate(small_cfg(), tmp_path / "b")
    for name in ("measurements.epra", "counts.epra", "plan.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_empty_plan_rejected():
    with pytest.raises(ConfigError, match="empty plan"):
        small_cfg(**{"plan.M": 0})


def test_smoke_run_counts(tmp_path):
    cfg = ExperimentConfig().with_overrides({"plan.M": 1024, "sim.mean_flux": 4000.0})
    d = cmd_simulate(cfg, tmp_path / "smoke")
    counts = read_array(d / "counts.epra")
    assert counts.shape == (1024, 4, 4) and counts.size == 16 * 1024
    assert counts.sum() == pytest.approx(4000 * 1024, rel=0.01)


def test_infinite_flux_writes_probabilities(tmp_path):
    d = cmd_simulate(small_cfg(**{"sim.mean_flux": math.inf}), tmp_path / "inf")
    p = read_array(d / "probabilities.epra")
    np.testing.assert_allclose(p.sum(axis=(1, 2)), 1.0, atol=1e-12)
    assert not (d / "counts.epra").exists()


# -- reconstruct ---------------------------------------------------------------

def test_reconstruct_twice_identical(run_dir):
    cmd_reconstruct(run_dir)
    first = (run_dir / "recon_position.epra").read_bytes()
    cmd_reconstruct(run_dir)
    assert (run_dir / "recon_position.epra").read_bytes() == first
    diag = json.loads((run_dir / "diagnostics.json").read_text())
    assert set(diag) == {"position", "momentum"}


def test_reconstruct_missing_plan(run_dir):
    (run_dir / "plan.json").unlink()
    with pytest.raises(MissingArtifact, match="plan.json"):
        cmd_reconstruct(run_dir)


def test_reconstruct_rejects_non_solver_keys(run_dir):
    with pytest.raises(ConfigError):
        cmd_reconstruct(run_dir, {"plan.M": "4"})


def test_reconstruct_divergence_dumps_config(run_dir):
    with pytest.warns(RuntimeWarning), pytest.raises(Diverged, match="solver.mu"):
        cmd_reconstruct(run_dir, {"solver.mu": "1e308"})


@pytest.mark.parametrize("order, exact", [("momentum_first", "momentum"), ("position_first", "position")])
def test_noiseless_complete_run(tmp_path, order, exact):
    cfg = ExperimentConfig().with_overrides(
        {"plan.M": 256, "sim.mean_flux": math.inf, "sim.order": order, "solver.mu": 2.0**14}
    )
    d = cmd_reconstruct(cmd_simulate(cfg, tmp_path / order), {"solver.mu": 2.0**14})
    truth = read_array(d / f"{exact}_joint.epra")
    recon = read_array(d / f"recon_{exact}.epra")
    assert np.linalg.norm(recon - truth) / np.linalg.norm(truth) < 1e-3
    # the domain filtered second is measured through the disturbance; with a
    # complete orthogonal plan the solve still inverts exactly what was measured
    other = "position" if exact == "momentum" else "momentum"
    mv = load_measurements(d)
    target = apply_adjoint(load_plan(d), other, mv.vector(other)).reshape(16, 16) / 256
    recon = read_array(d / f"recon_{other}.epra")
    assert np.linalg.norm(recon - target) / np.linalg.norm(target) < 1e-3


# -- analyze -------------------------------------------------------------------

def test_analyze_rows(run_dir):
    cmd_reconstruct(run_dir)
    path, rows = cmd_analyze(run_dir)
    assert path.name == "analysis.csv" and len(rows) == 6
    table = read_csv(path)
    assert list(table[0]) == ANALYSIS_COLUMNS and len(table) == 6


def test_analyze_flags_all_zero(tmp_path):
    d = cmd_simulate(small_cfg(), tmp_path / "z")
    write_array(d / "recon_position.epra", -np.ones((8, 8)))
    write_array(d / "recon_momentum.epra", read_array(d / "momentum_joint.epra"))
    _, rows = cmd_analyze(d, [0.0, 0.05])
    assert all(r["flag"] == "all_zero:position" for r in rows)
    assert all(math.isnan(r["violation[bits]"]) and not math.isnan(r["I_k[bits]"]) for r in rows)


def test_analyze_exact_matches_entropy_module(run_dir):
    _, rows = cmd_analyze(run_dir, [0.0], exact=True)
    cfg = small_cfg()
    s = build_state(cfg.spdc, build_grid(cfg))
    rep = steering_witness(position_joint(s), momentum_joint(s))
    assert rows[0]["violation[bits]"] == pytest.approx(rep.violation, abs=1e-12)
    assert rows[0]["mse_x[prob^2]"] == pytest.approx(0.0, abs=1e-30)
    assert (run_dir / "analysis_exact.csv").exists()


def test_analyze_missing_reconstruction(run_dir):
    with pytest.raises(MissingArtifact, match="recon_position"):
        cmd_analyze(run_dir)


# -- sweep and replay ----------------------------------------------------------

def test_cell_seeds_pure():
    assert cell_seeds(0, 64, 250.0, 1) == cell_seeds(0, 64, 250.0, 1)
    assert len({cell_seeds(0, 64, 250.0, t) for t in range(5)}) == 5
    assert cell_seeds(0, 64, 250.0, 0) != cell_seeds(1, 64, 250.0, 0)


def test_small_sweep_and_standalone_cell(tmp_path):
    cfg = small_cfg(**{"sweep.M": [16, 32], "sweep.flux": [1000], "sweep.trials": 2})
    out, cells = cmd_sweep(cfg, tmp_path / "sweep", threads=2)
    assert len(cells) == 4 and not any(c["error"] for c in cells)
    for name in ("trials.csv", "thresholds.csv", "mse_position.csv", "violation.csv", "entropy_sum.csv", "transition_flux.csv"):
        assert (out / name).exists()
    assert len(read_csv(out / "thresholds.csv")) == 4 * 6
    cell = run_cell(cfg, 32, 1000.0, 1)
    swept = next(c for c in cells if c["M"] == 32 and c["trial"] == 1)
    assert cell["mse_momentum"] == swept["mse_momentum"] and cell["violation"] == swept["violation"]
    # the same cell as a standalone run directory
    d = cmd_reconstruct(cmd_simulate(cell_config(cfg, 32, 1000.0, 1), tmp_path / "cell"))
    truth = read_array(d / "momentum_joint.epra")
    assert np.mean((read_array(d / "recon_momentum.epra") - truth) ** 2) == pytest.approx(cell["mse_momentum"], rel=1e-12)


def test_transition_flux():
    def cell(flux, m):
        return {"M": 8, "flux": flux, "error": "", "mse_position": m, "zero_mse_position": 1.0}

    cells = [cell(1, 0.5), cell(2, 0.05), cell(3, 0.2), cell(4, 0.01)]
    assert transition_flux(cells, "position", 8, 0.1) == 4
    assert transition_flux(cells[:3], "position", 8, 0.1) == math.inf
    assert transition_flux(cells, "position", 8, 0.6) == 1


def test_replay_identical(run_dir):
    cmd_reconstruct(run_dir)
    assert replay(run_dir) == []


def test_replay_detects_tampering(run_dir):
    a = read_array(run_dir / "measurements.epra")
    a[0, 0] += 1e-9
    write_array(run_dir / "measurements.epra", a)
    assert replay(run_dir) == ["measurements.epra"]


# -- command line --------------------------------------------------------------

def test_cli_flow(tmp_path, capsys):
    out = tmp_path / "cli"
    sets = ["--set", "grid.n=8", "--set", "plan.M=16"]
    assert cli(["simulate", "--out", str(out), "--seed", "3", *sets]) == 0
    assert cli(["reconstruct", str(out), "--set", "solver.mu=512"]) == 0
    assert cli(["analyze", str(out), "--thresholds", "0,0.05"]) == 0
    assert len(read_csv(out / "analysis.csv")) == 2
    assert cli(["replay", str(out)]) == 0
    assert "replay identical" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path):
    assert cli(["simulate", "--out", str(tmp_path / "a"), "--set", "plan.M=0"]) == 2
    assert cli(["simulate", "--out", str(tmp_path / "a"), "--set", "grid.bogus=1"]) == 2
    assert cli(["simulate", "--set", "grid.n=8"]) == 2
    assert cli(["simulate", "--out", str(tmp_path / "c"), "--set", "grid.mode=coverage"]) == 2
    assert cli(["reconstruct", str(tmp_path / "missing")]) == 3
    assert cli(["analyze", str(tmp_path / "x"), "--thresholds", "a,b"]) == 2
    d = cmd_simulate(small_cfg(), tmp_path / "d")
    with pytest.warns(RuntimeWarning):
        assert cli(["reconstruct", str(d), "--set", "solver.mu=1e308"]) == 4
    write_array(d / "counts.epra", np.zeros((32, 4, 4)))
    assert cli(["replay", str(d)]) == 1


def test_cli_seed_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert cli(["simulate", "--out", str(tmp_path / name), "--seed", "7", "--set", "grid.n=8", "--set", "plan.M=8"]) == 0
    assert (tmp_path / "a" / "counts.epra").read_bytes() == (tmp_path / "b" / "counts.epra").read_bytes()
