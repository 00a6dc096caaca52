"""Constant estimation and hypothesis certification by dense sampling.

Every structural constant of the coefficient set (spectral bounds,
decay budgets, repulsivity, perturbation size) is estimated as a sup
over a sample cloud, then fed into the explicit smallness thresholds.
Estimates are sample sups, so they are lower bounds on the true
constants; reports carry a refinement-stability metric instead of a
rigor claim.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.stats import qmc

from .fields import CoefficientSet, DomainSpec, MatrixField, PotentialField, \
    VectorField, bracket

__all__ = [
    "SampleCloud", "ConditionReport", "NonSymmetric", "OriginSample",
    "Trapped",
    "estimate_spectral_bounds", "estimate_Ca", "estimate_Cb",
    "estimate_Cpm_Cc", "estimate_CI",
    "check_ratio", "pointwise_caseA", "compute_K_M0", "check_smallness",
    "check_positivity", "certify",
]


class NonSymmetric(Exception):
    """Matrix field failed the symmetry check at a sample point."""


class OriginSample(Exception):
    """A sample point sits at the origin where x-hat is undefined."""


class Trapped(Exception):
    """K0 <= 0: the anisotropy ratio rules out the multiplier scheme."""


# ---------------------------------------------------------------------------


@dataclass
class SampleCloud:
    """Log-radial shells x directions plus a quasi-random fill."""
    points: np.ndarray          # (N, n)
    radii: np.ndarray           # (N,)
    n: int
    meta: Dict = field(default_factory=dict)

    @classmethod
    def build(cls, n: int, domain: Optional[DomainSpec] = None,
              r_min: float = 1e-3, r_max: float = 1e3,
              nshells: int = 60, ndirs: int = 26, nquasi: int = 10000,
              seed: int = 0):
        if domain is not None and domain.kind == "ball":
            r_min = max(r_min, domain.r0)
        rng = np.random.default_rng(seed)
        dirs = rng.normal(size=(ndirs, n))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        shells = np.exp(np.linspace(np.log(r_min), np.log(r_max), nshells))
        grid = (shells[:, None, None] * dirs[None, :, :]).reshape(-1, n)
        pts = [grid]
        if nquasi > 0:
            # quasi-random fill: one Sobol coordinate for the log-radius,
            # the rest turned into a direction through the normal map
            sob = qmc.Sobol(d=n + 1, seed=seed, scramble=True)
            u = sob.random_base2(max(1, math.ceil(math.log2(nquasi))))
            u = u[:nquasi]
            r = np.exp(np.log(r_min)
                       + u[:, 0] * (np.log(r_max) - np.log(r_min)))
            z = np.clip(u[:, 1:], 1e-12, 1 - 1e-12)
            from scipy.stats import norm as _norm
            d = _norm.ppf(z)
            nd = np.linalg.norm(d, axis=1)
            nd[nd == 0] = 1.0
            pts.append(r[:, None] * d / nd[:, None])
        P = np.concatenate(pts, axis=0)
        if domain is not None:
            P = P[domain.mask(P)]
        R = np.linalg.norm(P, axis=1)
        keep = R > 0
        P, R = P[keep], R[keep]
        return cls(P, R, n,
                   meta={"r_min": r_min, "r_max": r_max, "nshells": nshells,
                         "ndirs": ndirs, "nquasi": nquasi, "seed": seed})

    def refine(self, factor: int = 2, domain: Optional[DomainSpec] = None):
        """Strict superset of self with roughly factor x the points."""
        m = self.meta
        extra = SampleCloud.build(
            self.n, domain,
            r_min=m.get("r_min", 1e-3), r_max=m.get("r_max", 1e3),
            nshells=factor * m.get("nshells", 60),
            ndirs=factor * m.get("ndirs", 26),
            nquasi=(factor - 1) * m.get("nquasi", 10000),
            seed=m.get("seed", 0) + 1)
        P = np.concatenate([self.points, extra.points], axis=0)
        R = np.concatenate([self.radii, extra.radii])
        return SampleCloud(P, R, self.n, meta=dict(m, refined=factor))

    def __len__(self):
        return self.points.shape[0]


def _sup_with_divergence(radii, vals, r_max):
    """Sample sup with a crude growth test across the outer shells.

    If the max over the outermost decade exceeds 10x the max over the
    previous decade the quantity does not attain its sup in the window
    and is reported as infinite.
    """
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return 0.0, None
    i = int(np.argmax(vals))
    sup = float(vals[i])
    outer = radii >= r_max / 10.0
    mid = (radii >= r_max / 100.0) & (radii < r_max / 10.0)
    if outer.any() and mid.any():
        mo, mm = vals[outer].max(), vals[mid].max()
        if mo > 10.0 * max(mm, 1e-300) and mo > 0:
            return math.inf, None
    return sup, i


# ---------------------------------------------------------------------------
# constant estimators


def estimate_spectral_bounds(a: MatrixField, cloud: SampleCloud):
    """(N, nu): extreme eigenvalues of a over the cloud."""
    if len(cloud) == 0:
        raise ValueError("empty sample cloud")
    N, nu = -math.inf, math.inf
    for x in cloud.points:
        A = a(x)
        if np.max(np.abs(A - A.T)) > 1e-10 * max(1.0, np.max(np.abs(A))):
            raise NonSymmetric(f"a(x) not symmetric at {x}")
        w = np.linalg.eigvalsh(A)
        N = max(N, float(w[-1]))
        nu = min(nu, float(w[0]))
    return N, nu


def estimate_Ca(a: MatrixField, delta: float, cloud: SampleCloud):
    """sup of (|a'| + |x||a''| + |x|^2 |a'''|) <x>^{1+delta}."""
    w = bracket(cloud.radii) ** (1.0 + delta)
    vals = np.array([a.deriv_budget(x) for x in cloud.points]) * w
    sup, _ = _sup_with_divergence(cloud.radii, vals,
                                  cloud.meta.get("r_max", 1e3))
    return sup


def estimate_Cb(b: VectorField, delta: float, cloud: SampleCloud,
                mode: str = "homogeneous"):
    r = cloud.radii
    if mode == "homogeneous":
        w = r ** (2.0 + delta) + r ** (2.0 - delta)
    elif mode == "nonhomogeneous":
        w = r ** (2.0 + delta) + r
    else:
        raise ValueError(f"unknown mode {mode!r}")
    vals = np.array([np.linalg.norm(b.db(x), 2) for x in cloud.points]) * w
    sup, _ = _sup_with_divergence(r, vals, cloud.meta.get("r_max", 1e3))
    return sup


def estimate_Cpm_Cc(c: PotentialField, a: MatrixField, delta: float,
                    cloud: SampleCloud, mode: str = "homogeneous"):
    """(C_minus, C_plus, C_c) from the potential and its gradient."""
    r = cloud.radii
    br = bracket(r)
    cvals = np.empty(len(cloud))
    rep = np.empty(len(cloud))
    for i, x in enumerate(cloud.points):
        cvals[i] = c(x)
        rep[i] = (a(x) @ x) @ c.grad(x)
    if mode == "homogeneous":
        w_minus = r ** (2.0 + delta) + r ** (2.0 - delta)
        w_c = r * br ** (1.0 + delta)
    elif mode == "nonhomogeneous":
        w_minus = br ** (2.0 + delta)
        w_c = br ** (2.0 + delta)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    r_max = cloud.meta.get("r_max", 1e3)
    Cm2, _ = _sup_with_divergence(r, np.maximum(-cvals, 0.0) * w_minus, r_max)
    Cp2, _ = _sup_with_divergence(r, np.maximum(cvals, 0.0) * r ** 2, r_max)
    Cc, _ = _sup_with_divergence(r, np.maximum(rep, 0.0) * w_c, r_max)
    return math.sqrt(Cm2), math.sqrt(Cp2), Cc


def estimate_CI(a: MatrixField, delta: float, cloud: SampleCloud):
    """sup of |a(x) - I| <x>^delta (operator norm)."""
    n = cloud.n
    w = bracket(cloud.radii) ** delta
    vals = np.array([np.linalg.norm(a(x) - np.eye(n), 2)
                     for x in cloud.points]) * w
    sup, _ = _sup_with_divergence(cloud.radii, vals,
                                  cloud.meta.get("r_max", 1e3))
    return sup


# ---------------------------------------------------------------------------
# structural checks


def check_ratio(N: float, nu: float, n: int):
    """Dimensional bound on the anisotropy ratio N/nu."""
    if not (N >= nu > 0):
        raise ValueError("need N >= nu > 0")
    ratio = N / nu
    if n <= 46:
        thr = math.sqrt((n * n + 2 * n + 15) / (6.0 * (n + 2)))
        ok = ratio <= thr + 1e-12
        boundary = ok and ratio >= thr - 1e-12
        return {"pass": bool(ok), "threshold": thr, "ratio": ratio,
                "branch": "low-dimension", "boundary": bool(boundary)}
    thr = (3.0 * n - 1.0) / (n + 3.0)
    return {"pass": bool(ratio < thr), "threshold": thr, "ratio": ratio,
            "branch": "high-dimension", "boundary": False}


def pointwise_caseA(a: MatrixField, cloud: SampleCloud):
    """Pointwise trace inequality that can replace the ratio bound.

    Evaluates 2|a|_HS^2 + abar^2 - 6 abar ahat + 15 ahat^2 - 12|a xhat|^2
    at every cloud point; pass iff the minimum is >= 0.
    """
    best = math.inf
    argmin = None
    for x in cloud.points:
        r = np.linalg.norm(x)
        if r == 0.0:
            raise OriginSample("cloud point at the origin")
        xh = x / r
        A = a(x)
        abar = float(np.trace(A))
        axh = A @ xh
        ahat = float(axh @ xh)
        q = (2.0 * float(np.sum(A * A)) + abar ** 2 - 6.0 * abar * ahat
             + 15.0 * ahat ** 2 - 12.0 * float(axh @ axh))
        if q < best:
            best, argmin = q, x
    return {"pass": bool(best >= -1e-12), "min_value": best,
            "argmin": None if argmin is None else argmin.tolist()}


def compute_K_M0(N: float, nu: float, n: int, C_plus: float):
    """(K0, K, M0) for the homogeneous estimate; raises Trapped if the
    anisotropy leaves no positive margin."""
    if not (N >= nu > 0):
        raise ValueError("need N >= nu > 0")
    K0 = (3.0 * n - 1.0) / 2.0 - (n + 3.0) * N / (2.0 * nu)
    if K0 <= 0.0:
        raise Trapped(f"K0 = {K0:.6g} <= 0 at N/nu = {N / nu:.6g}")
    K = min(1.0, nu * nu / 9.0, nu * nu * K0 / 9.0)
    M0 = 64.0 * n * n * K ** -2 * (nu + 1.0) ** 2 * (C_plus + nu + 1.0) ** 2
    return K0, K, M0


def check_smallness(consts: Dict[str, float], mode: str):
    """Threshold checks on the decay constants.

    consts needs C_a, C_b, C_minus, C_c, delta, plus (N, K) in
    homogeneous mode or C_I in nonhomogeneous mode.  Returns one record
    per inequality.
    """
    d = consts["delta"]
    out = []

    def rec(name, lhs, rhs, strict=False):
        ok = lhs < rhs if strict else lhs <= rhs + 1e-15
        out.append({"name": name, "lhs": lhs, "rhs": rhs, "pass": bool(ok)})

    if mode == "homogeneous":
        K, N, n = consts["K"], consts["N"], consts["n"]
        Ca, Cb, Cm, Cc = (consts[k] for k in
                          ("C_a", "C_b", "C_minus", "C_c"))
        rec("variation", Ca * (N + Ca), K * d / (24.0 * n))
        rec("magnetic", Cb, K * d / (5.0 * N * N))
        rec("negative-part", Cm, K * d / (18.0 * N * (N + 2.0)))
        rec("repulsivity", Cc, K * d)
    elif mode == "nonhomogeneous":
        rec("variation", consts["C_a"], d / 48000.0)
        rec("perturbation", consts["C_I"], d / 7200.0)
        rec("magnetic", consts["C_b"], d / 920.0)
        rec("negative-part", consts["C_minus"], d / 5500.0)
        rec("repulsivity", consts["C_c"], d / 1300.0)
        rec("perturbation-absolute", consts["C_I"], 1.0 / 100.0, strict=True)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out


def check_positivity(C_minus: float, nu: float, n: int):
    """Friedrichs positivity margin C_minus < (n-2) sqrt(nu) / 2."""
    thr = (n - 2.0) * math.sqrt(nu) / 2.0
    return {"pass": bool(C_minus < thr), "threshold": thr,
            "C_minus": C_minus}


# ---------------------------------------------------------------------------
# assembled report


@dataclass
class ConditionReport:
    mode: str
    n: int
    delta: float
    constants: Dict[str, float]
    records: List[Dict]
    stability: Dict[str, float] = field(default_factory=dict)
    notes: str = "matrix norms are operator norms throughout"

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.records)

    def to_json(self) -> str:
        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v
        payload = {
            "mode": self.mode, "n": self.n, "delta": self.delta,
            "pass": self.passed,
            "constants": {k: clean(v) for k, v in self.constants.items()},
            "records": self.records,
            "stability": self.stability,
            "notes": self.notes,
        }
        return json.dumps(payload, indent=2, default=float)

    def table(self) -> str:
        lines = [f"mode={self.mode}  n={self.n}  delta={self.delta:g}"]
        for k in sorted(self.constants):
            lines.append(f"  {k:12s} = {self.constants[k]:.6g}")
        lines.append(f"  {'check':22s} {'measured':>12s} {'bound':>12s} ok")
        for r in self.records:
            lhs = r.get("lhs", r.get("measured", float("nan")))
            rhs = r.get("rhs", r.get("threshold", float("nan")))
            mark = "pass" if r["pass"] else "FAIL"
            lines.append(f"  {r['name']:22s} {lhs:12.4g} {rhs:12.4g} {mark}")
        lines.append("overall: " + ("pass" if self.passed else "FAIL"))
        return "\n".join(lines)


def certify(coeffs: CoefficientSet, mode: str,
            domain: Optional[DomainSpec] = None,
            cloud: Optional[SampleCloud] = None,
            stability_check: bool = False) -> ConditionReport:
    """Estimate every constant and run the full hypothesis checklist."""
    n, d = coeffs.n, coeffs.delta
    if cloud is None:
        cloud = SampleCloud.build(n, domain)
    N, nu = estimate_spectral_bounds(coeffs.a, cloud)
    Ca = estimate_Ca(coeffs.a, d, cloud)
    Cb = estimate_Cb(coeffs.b, d, cloud, mode)
    Cm, Cp, Cc = estimate_Cpm_Cc(coeffs.c, coeffs.a, d, cloud, mode)
    consts = {"N": N, "nu": nu, "C_a": Ca, "C_b": Cb, "C_minus": Cm,
              "C_plus": Cp, "C_c": Cc, "delta": d, "n": n}
    records = []
    if mode == "homogeneous":
        rr = check_ratio(N, nu, n)
        records.append({"name": "anisotropy-ratio", "lhs": rr["ratio"],
                        "rhs": rr["threshold"], "pass": rr["pass"]})
        try:
            K0, K, M0 = compute_K_M0(N, nu, n, Cp)
            consts.update(K0=K0, K=K, M0=M0)
            records.append({"name": "margin-K0", "lhs": -K0, "rhs": 0.0,
                            "pass": True})
            records.extend(check_smallness(consts, mode))
        except Trapped:
            K0 = (3.0 * n - 1.0) / 2.0 - (n + 3.0) * N / (2.0 * nu)
            consts.update(K0=K0)
            records.append({"name": "margin-K0", "lhs": -K0, "rhs": 0.0,
                            "pass": False})
    elif mode == "nonhomogeneous":
        if n != 3:
            raise ValueError("nonhomogeneous certification is for n = 3")
        consts["C_I"] = estimate_CI(coeffs.a, d, cloud)
        records.extend(check_smallness(consts, mode))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    pos = check_positivity(Cm, nu, n)
    records.append({"name": "positivity-margin", "lhs": Cm,
                    "rhs": pos["threshold"], "pass": pos["pass"]})
    if domain is not None and domain.kind != "none":
        from .fields import starshaped_check
        ss = starshaped_check(domain, coeffs.a, rng=0)
        records.append({"name": "starshaped-boundary",
                        "lhs": ss["worst_value"] or 0.0, "rhs": 0.0,
                        "pass": ss["pass"]})
    report = ConditionReport(mode, n, d, consts, records)
    if stability_check:
        fine = cloud.refine(2, domain)
        stab = {}
        for name, est, cur in (
                ("C_a", lambda: estimate_Ca(coeffs.a, d, fine), Ca),
                ("C_b", lambda: estimate_Cb(coeffs.b, d, fine, mode), Cb)):
            v = est()
            denom = max(abs(cur), 1e-300)
            stab[name] = abs(v - cur) / denom if v not in (0.0,) else 0.0
        report.stability = stab
    return report
