import json
import math

import numpy as np
import pytest

from helmlab.conditions import (SampleCloud, Trapped, certify, check_ratio,
                                compute_K_M0, pointwise_caseA)
from helmlab.fields import MatrixField
from helmlab.presets import get_preset


@pytest.fixture(scope="module")
def cloud3():
    return SampleCloud.build(3, nquasi=2000, seed=0)


def test_identity_certifies_with_known_constants(cloud3):
    p = get_preset("identity")
    rep = certify(p.coeffs, "homogeneous", p.domain, cloud3)
    assert rep.passed
    c = rep.constants
    for k in ("C_a", "C_b", "C_minus", "C_plus", "C_c"):
        assert c[k] == 0.0
    assert abs(c["N"] - 1.0) < 1e-12 and abs(c["nu"] - 1.0) < 1e-12
    assert abs(c["K"] - 1.0 / 9.0) < 1e-12
    assert abs(c["M0"] - 746496.0) < 1e-6


def test_ratio_check_trapped_branch():
    out = check_ratio(1.5, 1.0, 3)
    assert not out["pass"]
    with pytest.raises(Trapped):
        compute_K_M0(1.5, 1.0, 3, 0.0)


def test_trapped_preset_reports_failure(cloud3):
    p = get_preset("anisotropic-trapped")
    rep = certify(p.coeffs, "homogeneous", p.domain, cloud3)
    assert not rep.passed
    fail = {r["name"] for r in rep.records if not r["pass"]}
    assert "margin-K0" in fail


def test_diag_n4_preset_certifies():
    p = get_preset("diag-n4")
    cloud = SampleCloud.build(4, nquasi=2000, seed=1)
    rep = certify(p.coeffs, "homogeneous", p.domain, cloud)
    assert rep.passed
    assert rep.constants["C_plus"] == pytest.approx(0.5, abs=1e-9)


def test_near_identity_nonhomogeneous_certifies(cloud3):
    p = get_preset("near-identity-n3")
    rep = certify(p.coeffs, "nonhomogeneous", p.domain, cloud3)
    assert rep.passed
    assert rep.constants["C_I"] <= 1e-6


def test_pointwise_caseA_perturbed_diagonal():
    eps0 = 1e-3
    a = MatrixField.constant(np.diag([1.0, 1.0, 1.0 + eps0]))
    # include the axis directions where the minimum is attained
    dirs = np.concatenate([np.eye(3), -np.eye(3),
                           np.random.default_rng(0).normal(size=(40, 3))])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = np.concatenate([r * dirs for r in (0.5, 1.0, 2.0)])
    cloud = SampleCloud(pts, np.linalg.norm(pts, axis=1), 3)
    out = pointwise_caseA(a, cloud)
    assert out["min_value"] == pytest.approx(-8.0 * eps0, abs=1e-10)


def test_K_expression_equivalence():
    # the compact form min{1, nu^2/9, nu^2 K0 / 9} must agree with the
    # spelled-out minimum over a parameter grid
    worst = 0.0
    for n in (3, 4, 5, 7):
        for nu in (0.5, 1.0, 2.0):
            for ratio in (1.0, 1.05, 1.1):
                N = ratio * nu
                try:
                    K0, K, _ = compute_K_M0(N, nu, n, 0.3)
                except Trapped:
                    continue
                alt = min(1.0, nu * nu / 9.0,
                          (n + 3.0) * nu * nu / 18.0
                          * ((3.0 * n - 1.0) / (n + 3.0) - N / nu))
                worst = max(worst, abs(K - alt))
    assert worst < 1e-14


def test_report_json_round_trip(cloud3):
    p = get_preset("identity")
    rep = certify(p.coeffs, "homogeneous", p.domain, cloud3)
    doc = json.loads(rep.to_json())
    assert doc["pass"] is True
    assert doc["constants"]["M0"] == pytest.approx(746496.0)
    assert rep.table().splitlines()[-1] == "overall: pass"


def test_certification_deterministic(cloud3):
    p = get_preset("near-identity-n3")
    r1 = certify(p.coeffs, "homogeneous", p.domain, cloud3)
    r2 = certify(p.coeffs, "homogeneous", p.domain, cloud3)
    assert r1.to_json() == r2.to_json()
