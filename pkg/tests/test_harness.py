import json
import math

import numpy as np
import pytest

from helmlab.harness import (ConditionsFailed, ConfigError, Scenario,
                             records_to_csv, ring_source, run_scenario_file,
                             verify_aux_lambda_eps, verify_estimate,
                             CSV_COLUMNS)
from helmlab.norms import NormBundle


def _scn(**kw):
    base = dict(name="t", preset="identity", mode="homogeneous",
                sweep=[(1.0, 0.5)], solver={"Rmax": 100.0, "m": 5000})
    base.update(kw)
    return Scenario(**base)


def test_scenario_rejects_nonpositive_eps():
    with pytest.raises(ConfigError):
        _scn(sweep=[(1.0, 0.0)])
    with pytest.raises(ConfigError):
        _scn(sweep=[(1.0, -0.1)])


def test_scenario_rejects_bad_mode():
    with pytest.raises(ConfigError):
        _scn(mode="other")


def test_scenario_from_dict_requires_preset():
    with pytest.raises(ConfigError):
        Scenario.from_dict({"mode": "homogeneous"})


def test_ring_source_profile():
    f = ring_source(center=2.0, width=1.0)
    r = np.array([1.0, 2.0, 3.0])
    assert np.allclose(f(r), np.exp(-(r - 2.0) ** 2))


def test_verify_estimate_records_pass():
    recs, summary, report = verify_estimate(_scn())
    assert summary["all_passed"]
    assert len(recs) == 1
    r = recs[0]
    assert r.lhs_main <= r.rhs_main
    assert r.ratio() < 1e-3
    assert all(c["pass"] for c in r.aux)


def test_conditions_failed_without_force():
    scn = _scn(preset="anisotropic-trapped")
    with pytest.raises(ConditionsFailed):
        verify_estimate(scn)


def test_aux_trivial_zero_source():
    zero = NormBundle(0, 0, 0, 0, 0, 0, 0, 0)
    for mode in ("homogeneous", "nonhomogeneous"):
        consts = {"N": 1.0, "n": 3, "C_a": 0.0, "C_plus": 0.0,
                  "C_minus": 0.0}
        checks = verify_aux_lambda_eps(mode, consts, zero, zero, zero,
                                       -5.0, 0.5)
        for c in checks:
            assert c["lhs"] == 0.0 and c["pass"]


def test_csv_schema_frozen():
    recs, _, _ = verify_estimate(_scn())
    text = records_to_csv(recs)
    header = text.splitlines()[0].split(",")
    assert header == CSV_COLUMNS
    assert len(text.splitlines()) == 2


def test_run_scenario_file_outputs(tmp_path):
    cfg = {"preset": "identity", "mode": "homogeneous",
           "sweep": [[1.0, 0.5]], "solver": {"Rmax": 100.0, "m": 5000}}
    p = tmp_path / "scn.json"
    p.write_text(json.dumps(cfg))
    rc = run_scenario_file(str(p), outdir=str(tmp_path / "out"))
    assert rc == 0
    doc = json.loads((tmp_path / "out" / "scn.json").read_text())
    assert doc["summary"]["all_passed"] is True
    assert doc["conditions"]["pass"] is True
    assert (tmp_path / "out" / "scn.csv").exists()


def test_run_scenario_file_deterministic(tmp_path):
    cfg = {"preset": "identity", "mode": "homogeneous",
           "sweep": [[1.0, 0.5]], "solver": {"Rmax": 100.0, "m": 5000}}
    p = tmp_path / "scn.json"
    p.write_text(json.dumps(cfg))
    run_scenario_file(str(p), outdir=str(tmp_path / "a"))
    run_scenario_file(str(p), outdir=str(tmp_path / "b"))
    assert (tmp_path / "a" / "scn.json").read_bytes() == \
        (tmp_path / "b" / "scn.json").read_bytes()
    assert (tmp_path / "a" / "scn.csv").read_bytes() == \
        (tmp_path / "b" / "scn.csv").read_bytes()


def test_run_scenario_file_malformed(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ConfigError):
        run_scenario_file(str(p))


def test_run_scenario_file_trapped_nonzero(tmp_path, capsys):
    cfg = {"preset": "anisotropic-trapped", "mode": "homogeneous",
           "sweep": [[1.0, 0.5]], "solver": {"Rmax": 100.0, "m": 5000}}
    p = tmp_path / "scn.json"
    p.write_text(json.dumps(cfg))
    rc = run_scenario_file(str(p))
    assert rc != 0
    assert "trapped" in capsys.readouterr().out.lower()
