"""End-to-end verification: certify, solve, measure, assert.

A Scenario bundles a coefficient preset, a (lambda, eps) sweep, a source
and solver settings.  verify_estimate runs the sweep and checks the main
smoothing inequality together with the |lambda| and |eps| corollaries;
verify_aux_lambda_eps checks the sharper per-record auxiliary bounds.
Reports go out as JSON plus a flat CSV, written atomically, and are
deterministic for a fixed config and seed.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .conditions import ConditionReport, SampleCloud, certify
from .fields import CoefficientSet, DomainSpec
from .norms import NormBundle, RadialField, ShellQuadrature, compute_bundle
from .presets import Preset, get_preset
from .solver import (Grid3DSolveSpec, RadialSolveSpec, SolveResult,
                     centered_gradient, solve_3d, solve_radial)

__all__ = [
    "ConditionsFailed", "ConfigError", "Scenario", "EstimateRecord",
    "verify_estimate", "verify_aux_lambda_eps", "run_scenario_file",
    "scaling_sanity", "ring_source", "atomic_write_text",
    "DEFAULT_SWEEP",
]

DEFAULT_SWEEP: List[Tuple[float, float]] = [
    (lam, eps) for lam in (-5.0, -1.0, 0.0, 1.0, 5.0, 20.0)
    for eps in (1.0, 0.3, 0.1, 0.03)]


class ConditionsFailed(Exception):
    """Hypothesis certification failed and --force was not given."""


class ConfigError(Exception):
    """Malformed scenario configuration."""


def ring_source(center: float = 2.0, width: float = 1.0,
                amplitude: complex = 1.0):
    """Radial Gaussian ring profile r -> A exp(-((r-c)/w)^2)."""

    def prof(r):
        return amplitude * np.exp(-((np.asarray(r) - center) / width) ** 2)

    return prof


@dataclass
class Scenario:
    name: str
    preset: str
    mode: str                       # homogeneous | nonhomogeneous
    sweep: List[Tuple[float, float]]
    source: Dict = field(default_factory=dict)
    solver: Dict = field(default_factory=dict)
    norms: Dict = field(default_factory=dict)
    seed: int = 0
    preset_kwargs: Dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("homogeneous", "nonhomogeneous"):
            raise ConfigError(f"mode must be homogeneous or nonhomogeneous, "
                              f"got {self.mode!r}")
        for pair in self.sweep:
            if len(pair) != 2:
                raise ConfigError(f"sweep entries are (lambda, eps) pairs, "
                                  f"got {pair!r}")
            if pair[1] <= 0:
                raise ConfigError(f"sweep eps must be positive, got {pair}")

    @classmethod
    def from_dict(cls, d: Dict, name: str = "scenario") -> "Scenario":
        try:
            sweep = [tuple(map(float, p)) for p in
                     d.get("sweep", DEFAULT_SWEEP)]
            return cls(name=d.get("name", name), preset=d["preset"],
                       mode=d.get("mode", "homogeneous"), sweep=sweep,
                       source=d.get("source", {}), solver=d.get("solver", {}),
                       norms=d.get("norms", {}), seed=int(d.get("seed", 0)),
                       preset_kwargs=d.get("preset_kwargs", {}))
        except KeyError as e:
            raise ConfigError(f"missing required field {e.args[0]!r}")
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e))


@dataclass
class EstimateRecord:
    lam: float
    eps: float
    norms_v: Dict[str, float]
    norms_grad: Dict[str, float]
    norms_f: Dict[str, float]
    lhs_main: float
    rhs_main: float
    lhs_lambda: float
    rhs_lambda: float
    lhs_eps: float
    rhs_eps: float
    pass_main: bool
    pass_lambda: bool
    pass_eps: bool
    aux: List[Dict] = field(default_factory=list)
    truncation_warning: Optional[str] = None
    solver_iterations: int = 0
    solver_residual: float = 0.0

    @property
    def passed(self) -> bool:
        return (self.pass_main and self.pass_lambda and self.pass_eps
                and all(c["pass"] for c in self.aux))

    def ratio(self) -> float:
        return self.lhs_main / max(self.rhs_main, 1e-300)


# ---------------------------------------------------------------------------
# discrete fields -> norm-ready wrappers


class _Interp1DField:
    """Radial profile from discrete samples, zero outside the grid."""
    radial = True

    def __init__(self, r, vals, n):
        self.r = np.asarray(r)
        self.vals = np.asarray(vals, dtype=complex)
        self.n = n

    def profile(self, rr):
        rr = np.atleast_1d(np.asarray(rr, dtype=float))
        re = np.interp(rr, self.r, self.vals.real, left=0.0, right=0.0)
        im = np.interp(rr, self.r, self.vals.imag, left=0.0, right=0.0)
        out = re + 1j * im
        lo = rr < self.r[0]
        if self.r[0] > 2.0 * (self.r[1] - self.r[0]):
            out[lo] = 0.0     # exterior problem: obstacle interior
        else:
            out[lo] = self.vals[0]
        return out

    def value_many(self, X):
        return self.profile(np.linalg.norm(X, axis=1))


class _Interp3DField:
    """Trilinear interpolation of a grid function, zero outside the box."""
    radial = False

    def __init__(self, axis, values):
        self.n = 3
        self._ip = RegularGridInterpolator(
            (axis, axis, axis), np.asarray(values),
            bounds_error=False, fill_value=0.0)

    def value_many(self, X):
        return self._ip(np.asarray(X, dtype=float))


def _solution_fields(result: SolveResult, coeffs: CoefficientSet):
    """(v_field, gradb_magnitude_field) wrappers for norm computation."""
    g = result.grid
    if g["kind"] == "radial":
        r = g["r"]
        v = result.v
        dv = np.gradient(v, r)
        return (_Interp1DField(r, v, g["n"]),
                _Interp1DField(r, np.abs(dv), g["n"]))
    axis, h = g["axis"], g["h"]
    V = result.v
    grads = centered_gradient(V, h)
    if not coeffs.b.is_zero():
        pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
        bvals = np.array([coeffs.b(x) for x in pts.reshape(-1, 3)])
        bvals = bvals.reshape(*V.shape, 3)
        grads = [grads[d] + 1j * bvals[..., d] * V for d in range(3)]
    mag = np.sqrt(sum(np.abs(gd) ** 2 for gd in grads))
    return _Interp3DField(axis, V), _Interp3DField(axis, mag)


# ---------------------------------------------------------------------------
# inequality battery


def _main_estimate(mode: str, consts: Dict, nv: NormBundle, ng: NormBundle,
                   nf: NormBundle, lam: float, eps: float, slack: float):
    n, nu = consts["n"], consts["nu"]
    if mode == "homogeneous":
        M0 = consts["M0"]
        lhs = nv.xdot ** 2 + ng.ydot ** 2
        rhs = M0 * nf.ydot_dual ** 2
        lhs_l = abs(lam) * nv.ydot ** 2
        rhs_l = 2.0 * n ** 2 * (nu + 1.0) ** 2 * M0 * nf.ydot_dual ** 2
        lhs_e = abs(eps) * nv.ydot ** 2
        rhs_e = 9.0 * (nu + 1.0) * M0 * nf.ydot_dual ** 2
    else:
        Cp2 = consts["C_plus"] ** 2
        lhs = nv.x ** 2 + ng.y ** 2
        rhs = 1e9 * (Cp2 + 1.0) * nf.y_dual ** 2
        lhs_l = abs(lam) * nv.y ** 2
        rhs_l = 1e10 * (Cp2 + 1.0) ** 2 * nf.y_dual ** 2
        lhs_e = abs(eps) * nv.y ** 2
        rhs_e = 1e10 * (Cp2 + 1.0) * nf.y_dual ** 2
    tol = 1.0 + slack
    return (lhs, rhs, lhs <= tol * rhs,
            lhs_l, rhs_l, lhs_l <= tol * rhs_l,
            lhs_e, rhs_e, lhs_e <= tol * rhs_e)


def verify_aux_lambda_eps(mode: str, consts: Dict, nv: NormBundle,
                          ng: NormBundle, nf: NormBundle, lam: float,
                          eps: float, slack: float = 0.02) -> List[Dict]:
    """Per-record auxiliary bounds with their explicit constants."""
    N, n = consts["N"], consts["n"]
    Ca = consts["C_a"]
    Cp, Cm = consts["C_plus"], consts["C_minus"]
    lam_p, lam_m = max(lam, 0.0), max(-lam, 0.0)
    checks = []

    def add(name, lhs, rhs):
        checks.append({"name": name, "lhs": lhs, "rhs": rhs,
                       "pass": bool(lhs <= (1.0 + slack) * rhs + 1e-300)})

    if mode == "homogeneous":
        add("eps-dissipation-bound", abs(eps) * nv.ydot ** 2,
            3.0 * (1.0 + N) * (nf.ydot_dual + ng.ydot) * nv.xdot)
        add("lambda-positive-bound", lam_p * nv.ydot ** 2,
            2.0 * N * ng.ydot ** 2
            + 4.0 * (Cp ** 2 + N * (n + 1) + n ** 2 * Ca + 1.0)
            * nv.xdot ** 2 + nf.ydot_dual ** 2)
        add("lambda-negative-bound", lam_m * nv.ydot ** 2,
            2.0 * (Cm ** 2 + N + n ** 2 * Ca + 1.0) * nv.xdot ** 2
            + nf.ydot_dual ** 2)
    else:
        add("eps-dissipation-bound", abs(eps) * nv.y ** 2,
            math.sqrt(5.0) * nv.x * nf.y_dual + 6.0 * N * nv.x * ng.y)
        add("lambda-positive-bound", lam_p * nv.y ** 2,
            3.0 * (N + 6.0 * Cp ** 2) * ng.y ** 2
            + 3.0 * (N * (n + 1) + n ** 2 * Ca + 3.0 * Cp ** 2) * nv.x ** 2
            + nf.y_dual ** 2)
        add("lambda-negative-bound", lam_m * nv.y ** 2,
            18.0 * Cm ** 2 * ng.y ** 2
            + 3.0 * (N + n ** 2 * Ca + 6.0 * Cm ** 2 + 1.0) * nv.x ** 2
            + nf.y_dual ** 2)
    return checks


# ---------------------------------------------------------------------------
# scenario execution


def _build_quad(scenario: Scenario, domain: Optional[DomainSpec], n: int):
    nd = scenario.norms
    return ShellQuadrature.build(
        n, r_min=nd.get("r_min", 1e-3), r_max=nd.get("r_max", 1e3),
        nradii=nd.get("nradii", 400), domain=domain)


def _source_profile(scenario: Scenario):
    src = scenario.source
    kind = src.get("type", "ring")
    if kind != "ring":
        raise ConfigError(f"unknown source type {kind!r}")
    return ring_source(src.get("center", 2.0), src.get("width", 1.0),
                       src.get("amplitude", 1.0))


def _radial_compatible(preset: Preset) -> bool:
    a = preset.coeffs.a
    radial_a = hasattr(a, "constant_matrix") and np.allclose(
        a.constant_matrix, a.constant_matrix[0, 0] * np.eye(a.n))
    radial_a = (radial_a or hasattr(a, "alpha_derivs")
                or hasattr(a, "radial_proxy"))
    ok_dom = preset.domain.kind in ("none", "ball")
    return radial_a and preset.coeffs.b.is_zero() and ok_dom


def _solve_one(preset: Preset, scenario: Scenario, lam: float, eps: float,
               fprof) -> SolveResult:
    sv = scenario.solver
    path = sv.get("path")
    if path is None:
        path = "radial" if _radial_compatible(preset) else "grid3d"
    co = preset.coeffs
    if path == "radial":
        if not _radial_compatible(preset):
            raise ConfigError(
                f"preset {preset.name!r} is not radially symmetric")
        a = co.a
        if hasattr(a, "alpha_derivs"):
            alph = lambda r: float(a.alpha_derivs(r)[0])
        elif hasattr(a, "radial_proxy"):
            alph = lambda r: float(a.radial_proxy(r)[0])
        else:
            alph = lambda r: float(a.constant_matrix[0, 0])
        r0 = preset.domain.r0 if preset.domain.kind == "ball" else 0.0
        spec = RadialSolveSpec(
            co.n, r0, sv.get("Rmax", 200.0), sv.get("m", 20000), alph,
            lambda r: co.c(np.array([r] + [0.0] * (co.n - 1))) if r > 0
            else 0.0,
            lam, eps, fprof)
        return solve_radial(spec)
    if path != "grid3d":
        raise ConfigError(f"unknown solver path {path!r}")

    def fmany(X):
        return np.asarray(fprof(np.linalg.norm(X, axis=1)), dtype=complex)

    spec = Grid3DSolveSpec(sv.get("L", 8.0), sv.get("h", 0.25), co,
                           preset.domain, lam, eps, fmany,
                           rtol=sv.get("rtol", 1e-8))
    return solve_3d(spec)


def verify_estimate(scenario: Scenario, force: bool = False,
                    slack: float = 0.02,
                    progress: Optional[Callable] = None):
    """Run the sweep and assemble estimate records plus a summary."""
    preset = get_preset(scenario.preset, **scenario.preset_kwargs)
    cloud = SampleCloud.build(preset.coeffs.n, preset.domain,
                              seed=scenario.seed)
    report = certify(preset.coeffs, scenario.mode, preset.domain, cloud)
    if not report.passed and not force:
        msg = f"preset {scenario.preset!r} failed certification"
        if any(r["name"] == "margin-K0" and not r["pass"]
               for r in report.records):
            msg += " (trapped: the anisotropy ratio leaves no margin)"
        raise ConditionsFailed(msg + ":\n" + report.table())
    consts = report.constants
    fprof = _source_profile(scenario)
    quad = _build_quad(scenario, preset.domain, preset.coeffs.n)
    ffield = RadialField(fprof, preset.coeffs.n)
    nf = compute_bundle(ffield, quad)
    records = []
    for lam, eps in scenario.sweep:
        res = _solve_one(preset, scenario, lam, eps, fprof)
        vfld, gfld = _solution_fields(res, preset.coeffs)
        nv = compute_bundle(vfld, quad, duals=False)
        ng = compute_bundle(gfld, quad, duals=False)
        (lhs, rhs, ok, lhs_l, rhs_l, ok_l,
         lhs_e, rhs_e, ok_e) = _main_estimate(
             scenario.mode, consts, nv, ng, nf, lam, eps, slack)
        aux = verify_aux_lambda_eps(scenario.mode, consts, nv, ng, nf,
                                    lam, eps, slack)
        rec = EstimateRecord(
            lam=lam, eps=eps, norms_v=nv.as_dict(), norms_grad=ng.as_dict(),
            norms_f=nf.as_dict(), lhs_main=lhs, rhs_main=rhs,
            lhs_lambda=lhs_l, rhs_lambda=rhs_l, lhs_eps=lhs_e,
            rhs_eps=rhs_e, pass_main=ok, pass_lambda=ok_l, pass_eps=ok_e,
            aux=aux, truncation_warning=res.truncation_warning,
            solver_iterations=res.iterations,
            solver_residual=res.relative_residual)
        records.append(rec)
        if progress is not None:
            progress(rec)
    summary = {
        "scenario": scenario.name, "preset": scenario.preset,
        "mode": scenario.mode, "conditions_passed": report.passed,
        "consts": {k: (consts[k] if math.isfinite(consts[k]) else "inf")
                   for k in sorted(consts)},
        "records": len(records),
        "all_passed": all(r.passed for r in records),
        "max_main_ratio": max((r.ratio() for r in records), default=0.0),
    }
    return records, summary, report


def scaling_sanity(scenario: Scenario, lam: float = 1.0, eps: float = 0.5,
                   scales: Sequence[float] = (0.5, 1.0, 2.0)):
    """Main-estimate ratio under the parabolic rescaling family.

    Scaling s sends the source f to s^2 f(s x) and (lambda, eps) to
    s^2 (lambda, eps); both sides of the main inequality transform
    identically, so the ratio should be invariant up to discretization.
    """
    preset = get_preset(scenario.preset, **scenario.preset_kwargs)
    cloud = SampleCloud.build(preset.coeffs.n, preset.domain,
                              seed=scenario.seed)
    report = certify(preset.coeffs, scenario.mode, preset.domain, cloud)
    consts = report.constants
    base = _source_profile(scenario)
    quad = _build_quad(scenario, preset.domain, preset.coeffs.n)
    sv = dict(scenario.solver)
    out = {}
    for s in scales:
        fprof = lambda r, s=s: s ** 2 * base(s * np.asarray(r))
        sc = Scenario(scenario.name, scenario.preset, scenario.mode,
                      [(s ** 2 * lam, s ** 2 * eps)], scenario.source,
                      {**sv, "Rmax": sv.get("Rmax", 200.0) / s,
                       "m": sv.get("m", 20000)},
                      scenario.norms, scenario.seed, scenario.preset_kwargs)
        res = _solve_one(preset, sc, s ** 2 * lam, s ** 2 * eps, fprof)
        vfld, gfld = _solution_fields(res, preset.coeffs)
        nv = compute_bundle(vfld, quad, duals=False)
        ng = compute_bundle(gfld, quad, duals=False)
        nf = compute_bundle(RadialField(fprof, preset.coeffs.n), quad)
        lhs, rhs = _main_estimate(scenario.mode, consts, nv, ng, nf,
                                  s ** 2 * lam, s ** 2 * eps, 0.0)[:2]
        out[s] = lhs / max(rhs, 1e-300)
    return out


# ---------------------------------------------------------------------------
# reports and file driver


def atomic_write_text(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".report-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


CSV_COLUMNS = [
    "lambda", "eps", "v_xdot", "v_x", "v_ydot", "v_y", "grad_ydot",
    "grad_y", "f_ydot_dual", "f_y_dual", "lhs_main", "rhs_main",
    "main_ratio", "lhs_lambda", "rhs_lambda", "lhs_eps", "rhs_eps",
    "pass_main", "pass_lambda", "pass_eps", "aux_pass", "iterations",
    "residual", "truncated"]


def records_to_csv(records: List[EstimateRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([
            r.lam, r.eps,
            f"{r.norms_v['xdot']:.10g}", f"{r.norms_v['x']:.10g}",
            f"{r.norms_v['ydot']:.10g}", f"{r.norms_v['y']:.10g}",
            f"{r.norms_grad['ydot']:.10g}", f"{r.norms_grad['y']:.10g}",
            f"{r.norms_f['ydot_dual']:.10g}", f"{r.norms_f['y_dual']:.10g}",
            f"{r.lhs_main:.10g}", f"{r.rhs_main:.10g}",
            f"{r.ratio():.6g}",
            f"{r.lhs_lambda:.10g}", f"{r.rhs_lambda:.10g}",
            f"{r.lhs_eps:.10g}", f"{r.rhs_eps:.10g}",
            int(r.pass_main), int(r.pass_lambda), int(r.pass_eps),
            int(all(c["pass"] for c in r.aux)),
            r.solver_iterations, f"{r.solver_residual:.3g}",
            int(r.truncation_warning is not None)])
    return buf.getvalue()


def _clean_norms(d: Dict) -> Dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            out[k] = None          # dual norms are skipped for solutions
        else:
            out[k] = v
    return out


def _record_json(r: EstimateRecord) -> Dict:
    return {"lambda": r.lam, "eps": r.eps,
            "norms_v": _clean_norms(r.norms_v),
            "norms_grad": _clean_norms(r.norms_grad),
            "norms_f": _clean_norms(r.norms_f),
            "lhs_main": r.lhs_main, "rhs_main": r.rhs_main,
            "main_ratio": r.ratio(), "lhs_lambda": r.lhs_lambda,
            "rhs_lambda": r.rhs_lambda, "lhs_eps": r.lhs_eps,
            "rhs_eps": r.rhs_eps, "pass_main": r.pass_main,
            "pass_lambda": r.pass_lambda, "pass_eps": r.pass_eps,
            "aux": r.aux, "iterations": r.solver_iterations,
            "residual": r.solver_residual,
            "truncation_warning": r.truncation_warning,
            "passed": r.passed}


def run_scenario_file(path: str, outdir: Optional[str] = None,
                      force: bool = False, seed: Optional[int] = None,
                      emit_json: bool = False) -> int:
    """Execute a scenario config end to end; 0 iff everything passed."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}")
    scenario = Scenario.from_dict(cfg, name=os.path.splitext(
        os.path.basename(path))[0])
    if seed is not None:
        scenario.seed = seed
    try:
        records, summary, report = verify_estimate(scenario, force=force)
    except ConditionsFailed as e:
        print(str(e))
        return 1
    doc = {"summary": summary,
           "conditions": json.loads(report.to_json()),
           "records": [_record_json(r) for r in records]}
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False,
                      default=float)
    if outdir:
        atomic_write_text(os.path.join(outdir, scenario.name + ".json"),
                          text + "\n")
        atomic_write_text(os.path.join(outdir, scenario.name + ".csv"),
                          records_to_csv(records))
    if emit_json:
        print(text)
    else:
        for r in records:
            mark = "pass" if r.passed else "FAIL"
            print(f"lambda={r.lam:+.3g} eps={r.eps:.3g}  "
                  f"ratio={r.ratio():.3e}  [{mark}]")
        print(f"max main ratio {summary['max_main_ratio']:.3e}; "
              f"all_passed={summary['all_passed']}")
    return 0 if summary["all_passed"] else 1
