import json
import os

import pytest

from lehi.cli import main

CONFIG = {
    "dataset": {"kind": "synthetic-regression", "n": 300, "d_x": 4, "noise_std": 0.1, "seed": 0},
    "split": {"train_fraction": 0.8, "seed": 0},
    "model": {"hidden": [10], "activation": "relu"},
    "loss": "mse",
    "optimizers": [{"kind": "lehi"}, {"kind": "adam"}],
    "grid": [0.05, 0.01],
    "seeds": [0, 1],
    "epochs": 5,
    "batch_size": 32,
    "selection": {"metric": "eval_loss", "window": 2, "c": 2.0, "direction": "minimize-upper"},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


def test_unknown_subcommand_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["frobnicate"])
    assert excinfo.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_verify_aux_bce(capsys):
    assert main(["verify-aux", "--loss", "bce", "--grid", "-10:10:0.5", "--tol", "1e-7"]) == 0
    out = capsys.readouterr().out
    assert "max_abs_error" in out and "ok" in out


def test_verify_aux_multiclass(capsys):
    assert main(["verify-aux", "--loss", "multiclass-ce", "--grid", "-3:3:1",
                 "--classes", "4", "--tol", "1e-7"]) == 0


def test_verify_aux_mse(capsys):
    assert main(["verify-aux", "--loss", "mse", "--grid", "-5:5:0.5", "--tol", "1e-7"]) == 0


def test_verify_aux_impossible_tolerance(capsys):
    assert main(["verify-aux", "--loss", "bce", "--grid", "-5:5:1", "--tol", "1e-18"]) == 1


def test_bound_command(capsys):
    assert main(["bound", "--alpha", "0.01", "--iters", "500"]) == 0
    out = capsys.readouterr().out
    assert "satisfied=True" in out


def test_bound_rejects_boundary_iterations(capsys):
    assert main(["bound", "--beta1", "0.5", "--iters", "2"]) == 2
    assert "error:" in capsys.readouterr().err


def test_lemmas_command(capsys):
    assert main(["lemmas", "--trials", "50"]) == 0
    out = capsys.readouterr().out
    assert "failures=0" in out


def test_train_subcommand(tmp_path, config_path, capsys):
    out_dir = str(tmp_path / "out")
    assert main(["train", "--config", config_path, "--out", out_dir]) == 0
    assert os.path.exists(os.path.join(out_dir, "runs", "records.jsonl"))
    assert os.path.exists(os.path.join(out_dir, "runs", "lehi_lr0.05_seed0.csv"))
    figures = os.listdir(os.path.join(out_dir, "figures"))
    assert any(name.endswith(".png") for name in figures)
    assert "completed" in capsys.readouterr().out


def test_train_optimizer_flag(tmp_path, config_path):
    out_dir = str(tmp_path / "out")
    assert main(["train", "--config", config_path, "--optimizer", "adam",
                 "--lr", "0.01", "--epochs", "2", "--out", out_dir]) == 0
    assert os.path.exists(os.path.join(out_dir, "runs", "adam_lr0.01_seed0.csv"))


def test_sweep_writes_reports_and_figures(tmp_path, config_path, capsys):
    out_dir = str(tmp_path / "sweep")
    assert main(["sweep", "--config", config_path, "--out", out_dir]) == 0
    for rel in ("report.csv", "stability.csv", "runs/records.jsonl"):
        assert os.path.exists(os.path.join(out_dir, rel))
    figs = os.listdir(os.path.join(out_dir, "figures"))
    assert "curves_eval_loss.png" in figs
    assert "lr_sensitivity_eval_loss.png" in figs
    assert "selected lr" in capsys.readouterr().out


def test_stability_from_persisted_runs(tmp_path, config_path, capsys):
    out_dir = str(tmp_path / "sweep")
    main(["sweep", "--config", config_path, "--out", out_dir, "--no-figures"])
    table = str(tmp_path / "stability.csv")
    assert main(["stability", "--runs", os.path.join(out_dir, "runs"),
                 "--out", table]) == 0
    assert os.path.exists(table)
    assert "STABLE" in capsys.readouterr().out


def test_sweep_on_bundled_smoke_config(tmp_path, capsys):
    bundled = os.path.join(os.path.dirname(__file__), "..", "configs", "smoke.json")
    out_dir = str(tmp_path / "bundled")
    assert main(["sweep", "--config", bundled, "--out", out_dir]) == 0
    assert os.path.exists(os.path.join(out_dir, "report.csv"))
    assert os.path.exists(os.path.join(out_dir, "stability.csv"))


def test_missing_config_is_reported(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "nope.json")]) == 2
    assert "error:" in capsys.readouterr().err


def test_output_dir_env_override(tmp_path, config_path, monkeypatch):
    target = str(tmp_path / "from-env")
    monkeypatch.setenv("LEHI_OUTPUT_DIR", target)
    monkeypatch.chdir(tmp_path)
    assert main(["train", "--config", config_path, "--epochs", "1"]) == 0
    assert os.path.exists(os.path.join(target, "runs"))
