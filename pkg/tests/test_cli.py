import json

import pytest

from dampedplate import runs
from dampedplate.cli import main
from dampedplate.config import shipped_config, shipped_configs

SMALL = ["--set", "domain.n=8", "--set", "run.T=1.0", "--set", "run.stride=0.1"]


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_spectrum(capsys):
    code, out, _ = run_cli(capsys, "spectrum", "--config", "berger_contracting", "--count", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4
    assert lines[1].split()[:2] == ["1", "(1,1)"]
    assert float(lines[1].split()[2]) == pytest.approx(4 * 3.141592653589793**4, rel=1e-15)
    assert lines[2].split()[1] == "(1,2)" and lines[3].split()[1] == "(2,1)"


def test_config_error_exit_code(capsys, tmp_path):
    bad = shipped_configs(invalid=True)[0]
    code, _, err = run_cli(capsys, "simulate", "--config", str(bad), "--out", str(tmp_path))
    assert code == 2
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "config" and payload["rule"]


def test_missing_config_exit_code(capsys, monkeypatch):
    monkeypatch.delenv("DAMPEDPLATE_CONFIG", raising=False)
    code, _, err = run_cli(capsys, "simulate", "--config", "no_such_config")
    assert code == 2 and json.loads(err)["rule"] == "io"


def test_numerical_failure_exit_code(capsys, tmp_path):
    code, _, err = run_cli(capsys, "simulate", "--config", "berger_contracting", "--out", str(tmp_path), *SMALL,
                           "--set", "integrator.dt_min=4e-4", "--set", "integrator.tol_step=1e-30",
                           "--set", "integrator.residual_budget=1e-30")
    assert code == 3
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "numerical" and "dt underflow" in payload["message"]
    assert json.loads((tmp_path / "error.json").read_text()) == payload
    assert (tmp_path / "failure_dump.json").exists()


def test_simulate_outputs_and_manifest(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "simulate", "--config", "berger_contracting", "--out", str(tmp_path), *SMALL)
    assert code == 0
    summary = json.loads(out)
    assert summary["complete"] and summary["max_residual_relative"] <= 1e-6
    header = (tmp_path / "trajectory.csv").read_text().splitlines()[0].split(",")
    assert header[:7] == ["t", "energy", "kinetic", "elastic", "potential", "dissipation", "residual"]
    assert {"checkpoint.bin", "summary.json", "manifest.json"} <= {p.name for p in tmp_path.iterdir()}
    status = runs.verify_manifest(tmp_path)
    assert status and all(status.values())
    with open(tmp_path / "summary.json", "a") as fh:
        fh.write(" ")
    assert not runs.verify_manifest(tmp_path)["summary.json"]


def test_deterministic_csv_is_byte_identical(capsys, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / str(k)
        code, _, _ = run_cli(capsys, "simulate", "--config", "berger_contracting", "--out", str(out),
                             "--deterministic", "--set", "integrator.dt=5e-5", *SMALL)
        assert code == 0
        outs.append((out / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]


def test_equilibria_on_buckled(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "equilibria", "--config", "berger_buckled", "--out", str(tmp_path),
                           "--set", "domain.n=8")
    assert code == 0 and json.loads(out)["count"] == 3
    lines = (tmp_path / "equilibria.csv").read_text().splitlines()
    header = lines[0].split(",")
    col = header.index("c_1_1")
    lead = sorted(round(float(r.split(",")[col]), 8) for r in lines[1:])
    assert lead == [-1.0, 0.0, 1.0]


def test_diagnose_writes_reports(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "diagnose", "--config", "berger_buckled", "--out", str(tmp_path),
                           "--set", "domain.n=8", "--select", "equilibria,margin,completeness")
    assert code == 0
    assert json.loads(out)["diagnostics"] == ["completeness", "equilibria", "margin"]
    rep = json.loads((tmp_path / "completeness.json").read_text())
    assert rep["defect"] == pytest.approx(1 / (5 * 3.141592653589793**2), abs=1e-10)
    code, _, err = run_cli(capsys, "diagnose", "--config", "berger_buckled", "--select", "nonsense")
    assert code == 2


def test_sweep_marks_count_change(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "sweep", "--config", "berger_sweep", "--out", str(tmp_path), "--threads", "2")
    assert code == 0
    res = json.loads(out)
    assert res["points"] == 2 and res["count_changes"] == [1]
    rows = [r.split(",") for r in (tmp_path / "aggregate.csv").read_text().splitlines()]
    col = rows[0].index("equilibria")
    assert [int(r[col]) for r in rows[1:]] == [1, 3]
    assert (tmp_path / "point_000" / "simulate" / "trajectory.csv").exists()


def test_env_config_and_seed(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DAMPEDPLATE_CONFIG", str(shipped_config("berger_contracting")))
    code, out, _ = run_cli(capsys, "spectrum", "--count", "1")
    assert code == 0 and "(1,1)" in out
