# ABOUTME: Tests for the command-line front end
# ABOUTME: Tests each subcommand's output and the mapping of failures to exit codes
import dataclasses
import json

import pytest

import evolve.evolution
from evolve.main import (
    EXIT_FAILED,
    EXIT_MODEL,
    EXIT_OK,
    EXIT_UNCONVERGED,
    EXIT_USAGE,
    run,
)
from evolve.verification import CheckResult

DET = {"builtin": "det_only"}
LC_CONST = {"builtin": "liquid_crystal", "params": {"mu": "1"}}
LC_LINEAR = {"builtin": "liquid_crystal", "params": {"mu": "1 + t"}}


def unconverged(fibre_fn):
    def wrapped(model, t, cfg=None):
        return dataclasses.replace(fibre_fn(model, t, cfg), converged=False)
    return wrapped


def test_fibre_prints_det_dimensions(write_model, capsys):
    code = run(["fibre", "--model", write_model(DET), "--t", "0"])

    data = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    assert data["model"] == "det"
    assert (data["pointwise_dim"], data["sharp_dim"]) == (9, 1)
    assert len(data["symmetry_basis"]) == 8


def test_classify_constant_liquid_crystal(write_model, tmp_path):
    out = tmp_path / "report.json"

    code = run(["classify", "--model", write_model(LC_CONST), "--t0", "0", "--t1", "10",
                "--grid", "11", "--out", str(out)])

    report = json.loads(out.read_text())
    assert code == EXIT_OK
    assert report["leaves"] == [
        {"kind": "remodeling-interval", "t_lo": 0.0, "t_hi": 10.0, "boundary_flags": [True, True]},
    ]
    assert report["config"]["n_grid"] == 11
    assert len(report["model"]["sha256"]) == 64
    assert "timings" not in report


def test_classify_writes_csv_and_timings(write_model, tmp_path):
    out, grid_csv = tmp_path / "report.json", tmp_path / "grid.csv"

    code = run(["classify", "--model", write_model(LC_LINEAR), "--t0", "0", "--t1", "1",
                "--grid", "5", "--out", str(out), "--csv", str(grid_csv), "--timings"])

    report = json.loads(out.read_text())
    assert code == EXIT_OK
    assert report["smooth_aging"]["smooth_aging"] is True
    assert report["smooth_aging"]["constant_fibre_dim"] == 5
    assert "classify_seconds" in report["timings"]
    assert len(grid_csv.read_text().splitlines()) == 6


def test_process_on_exp_decay(write_model, tmp_path):
    out = tmp_path / "report.json"

    code = run(["process", "--model", write_model({"builtin": "exp_decay"}), "--t0", "0", "--t1", "1",
                "--grid", "21", "--out", str(out)])

    process = json.loads(out.read_text())["processes"][0]
    assert code == EXIT_OK
    assert process["t_ref"] == 0.5
    assert process["isomorphism_residual"] <= 1e-6
    assert process["cocycle_defect"] <= 1e-6


def test_process_with_gauge(write_model, tmp_path):
    out = tmp_path / "report.json"

    code = run(["process", "--model", write_model({"builtin": "exp_decay"}), "--t0", "0", "--t1", "1",
                "--grid", "11", "--t-ref", "0", "--gauge", "0.5,-0.2", "--out", str(out)])

    report = json.loads(out.read_text())
    assert code == EXIT_OK
    assert report["processes"][0]["gauge"] == [0.5, -0.2]
    assert report["config"]["gauge"] == [0.5, -0.2]


def test_process_without_remodeling_leaf_fails(write_model, capsys):
    code = run(["process", "--model", write_model(LC_LINEAR), "--t0", "0", "--t1", "1", "--grid", "5"])

    assert code == EXIT_FAILED
    assert "No remodeling leaf" in capsys.readouterr().err


def test_process_on_aging_leaf_is_usage_error(write_model, capsys):
    code = run(["process", "--model", write_model(LC_LINEAR), "--t0", "0", "--t1", "1",
                "--grid", "5", "--leaf", "2"])

    assert code == EXIT_USAGE
    assert "aging instant" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["fibre", "--t", "0"],
    ["classify", "--model", "m.json", "--t0", "0"],
    ["smooth"],
    ["fibre", "--model", "m.json", "--t", "zero"],
])
def test_malformed_command_lines(argv):
    assert run(argv) == EXIT_USAGE


def test_bad_gauge_is_usage_error(write_model):
    argv = ["process", "--model", write_model(DET), "--t0", "0", "--t1", "1", "--gauge", "a,b"]

    assert run(argv) == EXIT_USAGE


def test_invalid_override_is_usage_error(write_model):
    argv = ["classify", "--model", write_model(DET), "--t0", "0", "--t1", "1", "--grid", "1"]

    assert run(argv) == EXIT_USAGE


def test_help_exits_cleanly(capsys):
    assert run(["--help"]) == EXIT_OK
    assert "classify" in capsys.readouterr().out


def test_missing_model_file(tmp_path, capsys):
    code = run(["fibre", "--model", str(tmp_path / "missing.json"), "--t", "0"])

    assert code == EXIT_MODEL
    assert "Model file not found" in capsys.readouterr().err


def test_expression_error_in_model(write_model, capsys):
    path = write_model({"label": "bad", "m": 1, "components": ["F + t"]})

    assert run(["fibre", "--model", path, "--t", "0"]) == EXIT_MODEL
    assert "Dimension mismatch" in capsys.readouterr().err


def test_time_outside_model_domain(write_model):
    path = write_model({"label": "bounded", "m": 1, "components": ["det(F)"], "time_domain": [0, 1]})

    assert run(["fibre", "--model", path, "--t", "2"]) == EXIT_MODEL


def test_invalid_config_file(write_model, tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text("n_grid: lots\n")

    assert run(["fibre", "--model", write_model(DET), "--t", "0", "--config", str(config)]) == EXIT_MODEL


def test_config_file_supplies_grid(write_model, tmp_path):
    config, out = tmp_path / "config.yaml", tmp_path / "report.json"
    config.write_text("n_grid: 7\nsolver:\n  seed: 3\n")

    code = run(["classify", "--model", write_model(DET), "--t0", "0", "--t1", "1",
                "--config", str(config), "--out", str(out)])

    report = json.loads(out.read_text())
    assert code == EXIT_OK
    assert len(report["instants"]) == 7
    assert report["config"]["solver"]["seed"] == 3


def test_unconverged_fibre_exit_code(write_model, monkeypatch, capsys):
    monkeypatch.setattr("evolve.main.evolution_fibre", unconverged(evolve.evolution.evolution_fibre))

    code = run(["fibre", "--model", write_model(DET), "--t", "0"])

    assert code == EXIT_UNCONVERGED
    assert json.loads(capsys.readouterr().out)["converged"] is False


def test_unconverged_classification_exit_code(write_model, monkeypatch, tmp_path):
    monkeypatch.setattr("evolve.foliation.evolution_fibre", unconverged(evolve.evolution.evolution_fibre))
    out = tmp_path / "report.json"

    code = run(["classify", "--model", write_model(DET), "--t0", "0", "--t1", "1",
                "--grid", "3", "--out", str(out)])

    assert code == EXIT_UNCONVERGED
    assert not any(i["converged"] for i in json.loads(out.read_text())["instants"])


def test_verify_failure_exit_code(monkeypatch, capsys):
    monkeypatch.setattr("evolve.main.run_suite", lambda cfg, threads: [
        CheckResult("det symmetry oracle", True, "ok"),
        CheckResult("maximality", False, "1 violations"),
    ])

    code = run(["verify"])

    out = capsys.readouterr().out
    assert code == EXIT_FAILED
    assert "PASS det symmetry oracle: ok" in out
    assert "FAIL maximality: 1 violations" in out


def test_metrics_file_written(write_model, tmp_path):
    metrics = tmp_path / "evolve.prom"

    code = run(["classify", "--model", write_model(DET), "--t0", "0", "--t1", "1", "--grid", "3",
                "--out", str(tmp_path / "report.json"), "--metrics-file", str(metrics)])

    content = metrics.read_text()
    assert code == EXIT_OK
    assert 'evolve_run_duration_seconds{subcommand="classify"}' in content
    assert "evolve_grid_instants 3.0" in content
    assert "evolve_remodeling_leaves 1.0" in content
