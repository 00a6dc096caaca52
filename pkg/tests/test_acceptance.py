"""Acceptance gate.

One test per criterion; each prints a single pass/fail line with the
measured margin so the log doubles as a report.  The estimate scenarios
run once per session through the bundled config files and are shared by
the criteria that consume their records.
"""
import json
import math
import time

import numpy as np
import pytest

from helmlab.conditions import SampleCloud, certify, compute_K_M0, \
    pointwise_caseA, Trapped
from helmlab.fields import (CoefficientSet, DomainSpec, MatrixField,
                            PotentialField, TestFunction, VectorField)
from helmlab.harness import Scenario, run_scenario_file, scaling_sanity
from helmlab.multiplier import (divergence_fd, flux_divergences, flux_values,
                                identity_residual_prop21,
                                identity_residual_thm22)
from helmlab.norms import ShellQuadrature, lemma_suite
from helmlab.presets import get_preset, random_coefficients
from helmlab.solver import (Grid3DSolveSpec, RadialSolveSpec,
                            convergence_study, dissipation_identity,
                            solve_3d, solve_radial)
from helmlab.tjets import tjet_const, tjet_coords, tjet_exp
from helmlab.weight import ConstPhi, Weight


def _line(name: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def scenario_doc(tmp_path_factory):
    """Run a bundled scenario file once and return (exit code, report)."""
    cache = {}

    from pathlib import Path
    scen_dir = Path(__file__).resolve().parent.parent / "scenarios"

    def run(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            rc = run_scenario_file(str(scen_dir / f"{name}.json"),
                                   outdir=str(out))
            doc = json.loads((out / f"{name}.json").read_text())
            cache[name] = (rc, doc)
        return cache[name]

    return run


def test_criterion_1_identity_suite():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    worst = 0.0
    worst_fd = 0.0
    npts = 0
    for _ in range(20):
        co = random_coefficients(rng)
        v = TestFunction.random(3, rng)
        R = rng.uniform(1.0, 3.0)
        psi = Weight(R, 3)
        phi = ConstPhi(rng.uniform(0.5, 1.5))
        V = rng.normal()
        lam, eps = rng.normal(scale=3.0), rng.uniform(0.05, 1.0)
        done = 0
        while done < 50:
            x = rng.normal(scale=2.0, size=3)
            r = np.linalg.norm(x)
            if r < 0.05 or abs(r - R) < 0.05 * R:
                continue
            r1, r2 = identity_residual_prop21(v, co, V, psi, phi, x,
                                              relative=True)
            r3, r4 = identity_residual_thm22(v, co, lam, eps, psi, phi, x,
                                             relative=True)
            worst = max(worst, r1, r2, r3, r4)
            if done == 0:
                cf, _ = flux_divergences(v, co, V, psi, phi, x)
                fd = divergence_fd(
                    lambda y: flux_values(v, co, V, psi, phi, y)[0], x)
                worst_fd = max(worst_fd, abs(cf - fd) / max(abs(cf), 1.0))
            done += 1
            npts += 1
    dt = time.time() - t0
    ok = worst < 1e-7 and worst_fd < 1e-6 and dt < 60.0
    _line("criterion 1 (multiplier identities)", ok,
          f"worst residual {worst:.2e} over {npts} points, divergence "
          f"oracle gap {worst_fd:.2e}, {dt:.1f}s")


def test_criterion_2_norm_lemma_suite():
    t0 = time.time()
    b = get_preset("magnetic-small").coeffs.b
    quad = ShellQuadrature.build(3)

    def make_v(i):
        return TestFunction.random(3, np.random.default_rng(5000 + i))

    report = lemma_suite(make_v, b, 0.5, 100, quad, quad_slack=1e-3)
    dt = time.time() - t0
    worst = max(r["worst_ratio"] for r in report)
    bad = [r["name"] for r in report if not r["pass"]]
    ok = not bad and dt < 120.0
    _line("criterion 2 (norm inequalities)", ok,
          f"20 inequalities x 100 trials, worst ratio {worst:.6f}, "
          f"failures {bad or 'none'}, {dt:.1f}s")


def test_criterion_3_condition_checker():
    # (a) free case constants
    p = get_preset("identity")
    cloud = SampleCloud.build(3, nquasi=2000, seed=0)
    rep = certify(p.coeffs, "homogeneous", p.domain, cloud)
    c = rep.constants
    ok_a = (rep.passed and c["C_a"] == 0.0 and c["C_b"] == 0.0
            and abs(c["K"] - 1.0 / 9.0) < 1e-12
            and abs(c["M0"] - 746496.0) < 1e-6)
    # (b) four-dimensional diagonal preset
    p4 = get_preset("diag-n4")
    rep4 = certify(p4.coeffs, "homogeneous", p4.domain,
                   SampleCloud.build(4, nquasi=2000, seed=1))
    ok_b = rep4.passed
    # (c) perturbed diagonal pointwise quantity
    eps0 = 1e-3
    a = MatrixField.constant(np.diag([1.0, 1.0, 1.0 + eps0]))
    dirs = np.concatenate([np.eye(3), -np.eye(3),
                           np.random.default_rng(0).normal(size=(40, 3))])
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    pts = np.concatenate([r * dirs for r in (0.5, 1.0, 2.0)])
    out = pointwise_caseA(a, SampleCloud(pts, np.linalg.norm(pts, axis=1),
                                         3))
    ok_c = abs(out["min_value"] + 8.0 * eps0) < 1e-10
    # (d) equivalence of the two margin expressions
    worst_d = 0.0
    for n in range(3, 11):
        for nu in (0.3, 0.5, 1.0, 2.0, 5.0):
            for rr in (1.0, 1.02, 1.05, 1.08, 1.1):
                try:
                    _, K, _ = compute_K_M0(rr * nu, nu, n, 0.7)
                except Trapped:
                    continue
                alt = min(1.0, nu * nu / 9.0,
                          (n + 3.0) * nu * nu / 18.0
                          * ((3.0 * n - 1.0) / (n + 3.0) - rr))
                worst_d = max(worst_d, abs(K - alt))
    ok_d = worst_d < 1e-14
    _line("criterion 3 (condition checker)",
          ok_a and ok_b and ok_c and ok_d,
          f"free-case constants {'ok' if ok_a else 'BAD'}, n=4 preset "
          f"{'certifies' if ok_b else 'FAILS'}, pointwise min "
          f"{out['min_value']:.6e} vs {-8 * eps0:.6e}, margin-formula "
          f"gap {worst_d:.2e}")


def _gauge_pair(L=4.0, h=0.25, lam=-2.0, eps=0.5):
    n = 3

    def chi(X):
        X = np.atleast_2d(X)
        return np.exp(-np.sum(X * X, axis=1))

    def comp_tjets(x):
        xc = tjet_coords(x)
        s = tjet_const(0.0, n)
        for i in range(n):
            s = s + xc[i] * xc[i]
        e = tjet_exp(-s)
        return [(-2.0) * (xc[i] * e) for i in range(n)]

    bgrad = VectorField.from_tjets(n, comp_tjets)
    a = MatrixField.identity(n)
    czero = PotentialField.zero(n)
    co0 = CoefficientSet(a, VectorField.zero(n), czero, 0.5, n)
    cob = CoefficientSet(a, bgrad, czero, 0.5, n)

    def f(X):
        X = np.atleast_2d(X)
        return np.exp(-np.sum((X - np.array([1.0, 0.0, 0.0])) ** 2,
                              axis=1)) + 0.0j

    dom = DomainSpec.whole_space(n)
    r0 = solve_3d(Grid3DSolveSpec(L, h, co0, dom, lam, eps, f, rtol=1e-9))
    fb = lambda X: np.exp(-1j * chi(X)) * f(X)
    rb = solve_3d(Grid3DSolveSpec(L, h, cob, dom, lam, eps, fb, rtol=1e-9))
    g = r0.grid
    X = np.stack(np.meshgrid(g["axis"], g["axis"], g["axis"],
                             indexing="ij"), axis=-1)
    phase = np.exp(-1j * chi(X.reshape(-1, 3))).reshape(r0.v.shape)
    diff = np.max(np.abs(rb.v - phase * r0.v))
    return diff / np.max(np.abs(r0.v))


def _cross_agreement(h=0.25, L=6.0, lam=-2.0, eps=0.5):
    p = get_preset("near-identity-n3", obstacle=1.0)
    prof = lambda r: np.exp(-(np.asarray(r) - 2.0) ** 2)
    alph = lambda r: float(p.coeffs.a.alpha_derivs(r)[0])
    rad = solve_radial(RadialSolveSpec(3, 1.0, 200.0, 20000, alph,
                                       lambda r: 0.0, lam, eps, prof))
    f3 = lambda X: np.asarray(prof(np.linalg.norm(X, axis=1)),
                              dtype=complex)
    res = solve_3d(Grid3DSolveSpec(L, h, p.coeffs, p.domain, lam, eps, f3,
                                   rtol=1e-9))
    g = res.grid
    X = np.stack(np.meshgrid(g["axis"], g["axis"], g["axis"],
                             indexing="ij"), axis=-1)
    R = np.linalg.norm(X, axis=-1)
    sel = (R > 1.2) & (R < 0.6 * L) & g["interior"]
    ref_re = np.interp(R[sel], rad.grid["r"], rad.v.real)
    ref_im = np.interp(R[sel], rad.grid["r"], rad.v.imag)
    ref = ref_re + 1j * ref_im
    return float(np.max(np.abs(res.v[sel] - ref)) / np.max(np.abs(ref)))


def test_criterion_4_solver_verification():
    t0 = time.time()
    # radial manufactured solution, even profile
    def g2(r, s):
        return np.exp(-(r - s) ** 2)

    def v(r):
        return g2(r, 2.0) + g2(r, -2.0)

    def f(r):
        dv = -2 * (r - 2) * g2(r, 2.0) - 2 * (r + 2) * g2(r, -2.0)
        ddv = ((-2 + 4 * (r - 2) ** 2) * g2(r, 2.0)
               + (-2 + 4 * (r + 2) ** 2) * g2(r, -2.0))
        lap = ddv + 2.0 / r * dv if r > 0 else 3 * ddv
        return lap + (2.0 + 0.5j) * v(r)

    ONE = lambda r: 1.0
    ZERO = lambda r: 0.0
    spec = RadialSolveSpec(3, 0.0, 60.0, 600, ONE, ZERO, 2.0, 0.5, f,
                           exact=v)
    rad = convergence_study(spec, levels=2)
    ok_rad = 1.8 <= rad["order"] <= 2.2

    # 3D manufactured Gaussian
    co = CoefficientSet(MatrixField.identity(3), VectorField.zero(3),
                        PotentialField.zero(3), 0.5, 3)
    lam, eps = -1.0, 1.0

    def exact3(X):
        X = np.atleast_2d(X)
        return np.exp(-np.sum(X * X, axis=1))

    def f3(X):
        X = np.atleast_2d(X)
        r2 = np.sum(X * X, axis=1)
        return (4.0 * r2 - 6.0 + lam + 1j * eps) * np.exp(-r2)

    spec3 = Grid3DSolveSpec(4.0, 0.5, co, DomainSpec.whole_space(3),
                            lam, eps, f3, rtol=1e-9, exact=exact3)
    c3 = convergence_study(spec3, levels=2)
    ok_3d = 1.7 <= c3["order"] <= 2.3

    # discrete absorption balance on both paths
    r1 = solve_radial(RadialSolveSpec(3, 0.0, 80.0, 4000, ONE, ZERO,
                                      2.0, 0.5, f))
    m_rad = dissipation_identity(r1)[2]
    r2 = solve_3d(Grid3DSolveSpec(4.0, 0.5, co,
                                  DomainSpec.whole_space(3), 1.0, 0.5, f3,
                                  rtol=1e-10))
    m_3d = dissipation_identity(r2)[2]
    ok_diss = m_rad < 1e-6 and m_3d < 1e-6

    h = 0.25
    gauge = _gauge_pair(h=h)
    ok_gauge = gauge < 5 * h * h
    cross = _cross_agreement(h=h)
    ok_cross = cross < 5 * h * h
    dt = time.time() - t0
    ok = ok_rad and ok_3d and ok_diss and ok_gauge and ok_cross and dt < 600
    _line("criterion 4 (solver verification)", ok,
          f"radial order {rad['order']:.3f}, 3D order {c3['order']:.3f}, "
          f"dissipation {max(m_rad, m_3d):.2e}, gauge {gauge:.2e} vs "
          f"{5 * h * h:.3f}, cross {cross:.2e} vs {5 * h * h:.3f}, "
          f"{dt:.0f}s")


def test_criterion_5_homogeneous_estimates(scenario_doc):
    t0 = time.time()
    rc_free, free = scenario_doc("free-space")
    rc_n4, n4 = scenario_doc("diag-n4")
    dt = time.time() - t0
    ratios = [r["main_ratio"] for doc in (free, n4)
              for r in doc["records"]]
    ok = (rc_free == 0 and rc_n4 == 0
          and free["summary"]["all_passed"] and n4["summary"]["all_passed"]
          and len(free["records"]) == 24 and len(n4["records"]) == 24
          and dt < 300)
    _line("criterion 5 (homogeneous estimate sweeps)", ok,
          f"48 records over two scenarios, max ratio {max(ratios):.2e}, "
          f"{dt:.0f}s")


def test_criterion_6_nonhomogeneous_estimate(scenario_doc):
    t0 = time.time()
    rc, doc = scenario_doc("near-identity-ball")
    dt = time.time() - t0
    ratios = [r["main_ratio"] for r in doc["records"]]
    ok = (rc == 0 and doc["summary"]["all_passed"]
          and all(r["pass_main"] and r["pass_lambda"] and r["pass_eps"]
                  for r in doc["records"])
          and dt < 900)
    _line("criterion 6 (obstacle estimate at 65^3)", ok,
          f"{len(doc['records'])} records, max ratio {max(ratios):.2e}, "
          f"{dt:.0f}s")


def test_criterion_7_auxiliary_inequalities(scenario_doc):
    total = 0
    bad = 0
    worst = 0.0
    for name in ("free-space", "diag-n4", "near-identity-ball"):
        _, doc = scenario_doc(name)
        for rec in doc["records"]:
            for aux in rec["aux"]:
                total += 1
                if not aux["pass"]:
                    bad += 1
                if aux["rhs"] > 0:
                    worst = max(worst, aux["lhs"] / aux["rhs"])
    ok = bad == 0 and total >= 3 * (24 + 24 + 6)
    _line("criterion 7 (auxiliary bounds on every record)", ok,
          f"{total} auxiliary checks, {bad} failures, worst margin "
          f"{worst:.3f}")


def test_criterion_8_scaling_sanity():
    scn = Scenario("scale", "identity", "homogeneous", [(1.0, 0.5)],
                   solver={"Rmax": 200.0, "m": 20000})
    out = scaling_sanity(scn)
    base = out[1.0]
    dev = max(abs(v / base - 1.0) for v in out.values())
    ok = dev < 0.02
    _line("criterion 8 (rescaling invariance)", ok,
          f"ratio deviation {dev:.2e} over s in {{1/2, 1, 2}}")
