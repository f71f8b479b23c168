from __future__ import annotations

import json

import pytest

from hypoplast.cli import EXIT_INVALID, EXIT_OK, main, parse_grid, parse_resolution


def test_validate_ok(capsys):
    assert main(["validate", "--config", "shear_creep"]) == EXIT_OK
    assert "PASS [growth-exponents]" in capsys.readouterr().out


def test_validate_rejects(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("exponents: {p: 2.0}\n")
    assert main(["validate", "--config", str(cfg)]) == EXIT_INVALID
    assert "FAIL [growth-exponents]" in capsys.readouterr().out


def test_unknown_key_is_invalid(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("colour: red\n")
    assert main(["validate", "--config", str(cfg)]) == EXIT_INVALID


def test_run_report_restart(tmp_path, capsys):
    out = tmp_path / "run"
    args = ["--config", "shear_creep", "--out", str(out), "--steps", "4", "--resolution", "5,5,5,5", "--dt", "2e-3"]
    assert main(["run", *args]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["final_step"] == 4
    assert main(["report", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["steps"] == 4 and report["balance_residual_L1"] == pytest.approx(summary["balance_residual_L1"])
    assert main(["run", *args[:-4], "--steps", "6", "--resolution", "5,5,5,5", "--dt", "2e-3", "--restart", "latest"]) == EXIT_OK
    assert json.loads((out / "summary.json").read_text())["final_step"] == 6


def test_run_invalid_writes_failure(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("material: {blowup_exponent: 3.0}\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    fail = json.loads((tmp_path / "o" / "failure.json").read_text())
    assert fail["status"] == "invalid" and "determinant-exponent" in fail["failures"][0]


def test_sweep(tmp_path, capsys):
    out = tmp_path / "sw"
    code = main(["sweep", "--config", "rest", "--out", str(out), "--steps", "2", "--grid", "dt=1e-3;5e-4",
                 "--grid", "k_inv=0;1e-8", "--grid", "resolution=5,5,5,5"])
    assert code == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[0].startswith("run,exit_code")


def test_sweep_bad_axis(tmp_path):
    assert main(["sweep", "--config", "rest", "--out", str(tmp_path), "--grid", "gravity=1;2"]) == EXIT_INVALID


def test_parsers():
    assert parse_resolution("8,6,4,4") == (8, 6, 4, 4)
    with pytest.raises(Exception):
        parse_resolution("8,6")
    assert parse_grid(["delta=1e-6;1e-8"]) == {"delta": [1e-6, 1e-8]}


def test_report_missing(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) != EXIT_OK
