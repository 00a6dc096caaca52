import json

import pytest

from helmlab.cli import main


def test_check_conditions_pass_exit_zero(capsys):
    rc = main(["check-conditions", "--preset", "identity"])
    assert rc == 0
    assert "overall: pass" in capsys.readouterr().out


def test_check_conditions_trapped_exit_one(capsys):
    rc = main(["check-conditions", "--preset", "anisotropic-trapped"])
    assert rc == 1
    assert "FAIL" in capsys.readouterr().out


def test_check_conditions_json_output(capsys):
    rc = main(["--json", "check-conditions", "--preset", "identity"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["pass"] is True


def test_verify_identity_small(capsys):
    rc = main(["--seed", "3", "verify-identity", "--trials", "2",
               "--points", "10"])
    assert rc == 0
    assert "pass" in capsys.readouterr().out


def test_run_missing_config_exit_two(capsys):
    rc = main(["run", "--config", "/nonexistent/file.json"])
    assert rc == 2


def test_run_scenario_exit_zero(tmp_path, capsys):
    cfg = {"preset": "identity", "mode": "homogeneous",
           "sweep": [[1.0, 0.5]], "solver": {"Rmax": 100.0, "m": 5000}}
    p = tmp_path / "scn.json"
    p.write_text(json.dumps(cfg))
    rc = main(["run", "--config", str(p), "--out", str(tmp_path / "out")])
    assert rc == 0
    assert (tmp_path / "out" / "scn.csv").exists()


def test_solve_radial_writes_solution(tmp_path, capsys):
    cfg = {"kind": "radial", "lambda": 1.0, "eps": 0.5,
           "Rmax": 50.0, "m": 2000, "name": "demo"}
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    rc = main(["solve", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "demo.hls").exists()
