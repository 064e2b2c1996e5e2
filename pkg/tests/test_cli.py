import json

import pytest

from porovisc.cli import main
from porovisc.config import benchmark_config, equilibrium_config


@pytest.fixture
def small(tmp_path):
    path = tmp_path / "small.json"
    benchmark_config(n_cells=16, n_steps=8).to_json(path)
    return path


def test_validate_ok(small, capsys):
    assert main(["validate", str(small)]) == 0
    assert "valid" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    path = tmp_path / "bad.json"
    benchmark_config(d=2, theta=1).to_json(path)
    assert main(["validate", str(path)]) == 2
    assert "θ > d/2 required" in capsys.readouterr().out


def test_validate_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"grid": {"n_cells": "many"}}')
    assert main(["validate", str(path)]) == 2


def test_run_writes_outputs(small, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(small), "-o", str(out)]) == 0
    assert json.loads((out / "run.json").read_text())["status"]["code"] == 0


def test_run_invalid_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    benchmark_config(eta=0.0).to_json(path)
    assert main(["run", str(path), "-o", str(tmp_path / "o")]) == 2


def test_run_solver_failure_exit_code(tmp_path):
    path = tmp_path / "cap.json"
    benchmark_config(n_cells=16, n_steps=4, mech_solver={"max_iter": 1}).to_json(path)
    out = tmp_path / "o"
    assert main(["run", str(path), "-o", str(out)]) == 3
    assert json.loads((out / "run.json").read_text())["status"]["step"] == 1


def test_sweep(tmp_path, capsys):
    path = tmp_path / "eq.json"
    equilibrium_config(n_cells=16).to_json(path)
    assert main(["sweep", str(path), "--eta", "1e-2", "1e-3"]) == 0
    assert json.loads(capsys.readouterr().out)["eta"]["verdict_c"] == "stationary"


def test_gradcheck(small, capsys):
    assert main(["gradcheck", str(small), "--samples", "2"]) == 0
    assert "worst relative error" in capsys.readouterr().out


def test_audit_material(small, capsys):
    assert main(["audit-material", str(small), "--samples", "40"]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]
