"""Harness tests: configs, determinism, exit codes, CSV schema, CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from crflab.cli import main as cli_main
from crflab.harness import (CSV_COLUMNS, ConfigError, ExperimentConfig,
                            load_config, observed_orders, run_experiment)


def write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


SPACE_FORM_CFG = """
[experiment]
mode = space_form
out_dir = {out}
seed = 7

[space_form]
c0 = 1.0
ode_T = 0.05
ode_dt = 0.001
"""


def test_config_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path / "a.cfg",
                            SPACE_FORM_CFG.format(out=tmp_path / "run")))
    assert cfg.mode == "space_form"
    assert cfg.c0 == 1.0
    assert cfg.seed == 7


def test_config_unknown_key(tmp_path):
    p = write(tmp_path / "a.cfg", "[experiment]\nmode = space_form\nbogus = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(p)


def test_config_negative_dt_names_field(tmp_path):
    p = write(tmp_path / "a.cfg",
              "[experiment]\nmode = grid_flow\n\n[flow]\ndt = -0.5\n")
    with pytest.raises(ConfigError, match="dt"):
        load_config(p)


def test_config_bad_mode(tmp_path):
    p = write(tmp_path / "a.cfg", "[experiment]\nmode = warp_drive\n")
    with pytest.raises(ConfigError, match="mode"):
        load_config(p)


def test_config_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.cfg")


def test_space_form_mode_exit_zero(tmp_path):
    cfg = ExperimentConfig(mode="space_form", out_dir=str(tmp_path / "r"),
                           c0=1.0, ode_T=0.05, ode_dt=1e-3)
    assert run_experiment(cfg, quiet=True) == 0
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["invariants"]["einstein_stationary"]["passed"]
    assert report["info"]["stationary"] is True


def test_csv_schema_exact(tmp_path):
    cfg = ExperimentConfig(mode="space_form", out_dir=str(tmp_path / "r"),
                           c0=1.1, ode_T=0.05, ode_dt=1e-3)
    run_experiment(cfg, quiet=True)
    header = (tmp_path / "r" / "run.csv").read_text().splitlines()[0]
    assert header == ",".join(CSV_COLUMNS)


def test_determinism_bit_identical(tmp_path):
    outs = []
    for name in ("one", "two"):
        cfg = ExperimentConfig(mode="grid_flow", out_dir=str(tmp_path / name),
                               resolution=8, T=6 * 0.2 * (1 / 8) ** 2 / 12,
                               seed=99, drift_tol=100.0)
        run_experiment(cfg, quiet=True)
        outs.append((tmp_path / name / "run.csv").read_bytes())
    assert outs[0] == outs[1]


def test_grid_flow_small_passes_monotonicity(tmp_path):
    dt8 = 0.2 * (1 / 8) ** 2 / 12
    cfg = ExperimentConfig(mode="grid_flow", out_dir=str(tmp_path / "r"),
                           resolution=8, T=8 * dt8, drift_tol=100.0,
                           match_tol=0.05)
    code = run_experiment(cfg, quiet=True)
    report = json.loads((tmp_path / "r" / "report.json").read_text())
    assert report["invariants"]["W_nondecreasing"]["passed"]
    assert report["invariants"]["mass_conservation"]["passed"]
    assert code == 0


def test_grid_flow_honest_drift_failure(tmp_path):
    # with the strict drift threshold the same run must report failure
    # (exit 2) while still writing the complete CSV for diagnosis
    dt8 = 0.2 * (1 / 8) ** 2 / 12
    cfg = ExperimentConfig(mode="grid_flow", out_dir=str(tmp_path / "r"),
                           resolution=8, T=8 * dt8, drift_tol=1e-3)
    code = run_experiment(cfg, quiet=True)
    assert code == 2
    rows = (tmp_path / "r" / "run.csv").read_text().splitlines()
    assert len(rows) == 1 + 9  # header + every state, failure notwithstanding


def test_checkpoint_emitted_when_requested(tmp_path):
    dt8 = 0.2 * (1 / 8) ** 2 / 12
    cfg = ExperimentConfig(mode="grid_flow", out_dir=str(tmp_path / "r"),
                           resolution=8, T=5 * dt8, drift_tol=100.0,
                           store_checkpoint=True)
    run_experiment(cfg, quiet=True)
    from crflab.checkpoint import CheckpointReader
    rd = CheckpointReader(tmp_path / "r" / "trajectory.ckpt")
    assert rd.count == 6


def test_out_dir_env_override(tmp_path, monkeypatch):
    target = tmp_path / "env_out"
    monkeypatch.setenv("CRFLAB_OUT_DIR", str(target))
    p = write(tmp_path / "a.cfg", SPACE_FORM_CFG.format(out=tmp_path / "ign"))
    cfg = load_config(p)
    assert cfg.out_dir == str(target)


def test_cli_exit_codes(tmp_path, capsys):
    cfg_path = write(tmp_path / "sf.cfg",
                     SPACE_FORM_CFG.format(out=tmp_path / "out"))
    assert cli_main(["--config", str(cfg_path), "--quiet"]) == 0
    bad = write(tmp_path / "bad.cfg",
                "[experiment]\nmode = grid_flow\n\n[flow]\ndt = -1\n")
    assert cli_main(["--config", str(bad), "--quiet"]) == 1
    err = capsys.readouterr().err
    assert "dt" in err


def test_cli_mode_override(tmp_path):
    cfg_path = write(tmp_path / "sf.cfg",
                     SPACE_FORM_CFG.format(out=tmp_path / "out"))
    # space_form config forced into convergence mode, which needs quantity
    code = cli_main(["--config", str(cfg_path), "--quiet",
                     "--mode", "convergence_study", "--levels", "3",
                     "--out-dir", str(tmp_path / "conv")])
    assert code == 0
    rep = json.loads((tmp_path / "conv" / "report.json").read_text())
    assert rep["mode"] == "convergence_study"


def test_observed_orders_flags_nonmonotone():
    orders = observed_orders([1.0, 0.5, 0.7])
    assert orders[0] == pytest.approx(1.0)
    assert np.isnan(orders[1])


def test_convergence_flat_ricci_saturated(tmp_path):
    cfg = ExperimentConfig(mode="convergence_study",
                           out_dir=str(tmp_path / "r"),
                           quantity="flat_ricci", levels=3)
    assert run_experiment(cfg, quiet=True) == 0
    rep = json.loads((tmp_path / "r" / "report.json").read_text())
    assert rep["info"]["flat_ricci"]["orders"] == "saturated"
