"""Morrey-Campanato type norms on shell quadratures.

All norms reduce to shell integrals I(R) = int_{Omega, |x|=R} g dS,
computed by a product Gauss rule on the sphere (n = 3) or a closed-form
surface factor for radial fields (any n).  Sup-type norms are taken over
the radius grid and locally refined by golden section around the argmax.

The predual norms of the Y family are defined here by dyadic sums; the
two-sided dyadic comparisons (factor 2 homogeneous, factor 3
nonhomogeneous) then control the duality pairings.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .fields import DomainSpec, TestFunction, VectorField

__all__ = [
    "ShellQuadrature", "NormBundle", "RadialField", "GradField",
    "TruncatedTail", "QuadratureUnresolved", "UnsupportedDimension",
    "sphere_area", "shell_data",
    "norm_Xdot", "norm_X", "norm_Ydot", "norm_Y",
    "norm_Ydot_dual", "norm_Y_dual", "norm_Xdot_dual", "norm_X_dual",
    "norm_Ydot_dyadic", "norm_Y_dyadic",
    "compute_bundle", "lemma_suite", "LEMMA_NAMES",
]


class TruncatedTail(Exception):
    """The outermost shell carries too much mass for the window used."""


class QuadratureUnresolved(Exception):
    """Grid refinement moved a quadrature value beyond the slack."""


class UnsupportedDimension(Exception):
    """Angular quadrature only exists for n = 3; use radial fields."""


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1}."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass
class RadialField:
    """Radially symmetric scalar field given by a profile of |x|."""
    profile: Callable
    n: int
    radial: bool = True

    def value_many(self, X):
        return np.asarray(self.profile(np.linalg.norm(X, axis=1)))

    def __call__(self, x):
        return self.profile(float(np.linalg.norm(x)))


class GradField:
    """Pointwise magnitude of the covariant gradient of a test function."""

    def __init__(self, v: TestFunction, b: Optional[VectorField] = None):
        self.v = v
        self.b = b
        self.n = v.n

    def value_many(self, X):
        X = np.asarray(X, dtype=float)
        g = self.v.grad_many(X)
        if self.b is not None and not self.b.is_zero():
            vals = self.v.value_many(X)
            bmany = getattr(self.b, "value_many", None)
            if bmany is not None:
                bx = np.asarray(bmany(X))
            else:
                bx = np.array([self.b(x) for x in X])
            g = g + 1j * bx * vals[:, None]
        return np.linalg.norm(g, axis=1)


@dataclass
class ShellQuadrature:
    radii: np.ndarray           # (nR,) sorted
    dirs: np.ndarray            # (nd, n) unit directions
    wdirs: np.ndarray           # (nd,) weights summing to |S^{n-1}|
    n: int
    domain: Optional[DomainSpec] = None

    @classmethod
    def build(cls, n: int, r_min: float = 1e-3, r_max: float = 1e3,
              nradii: int = 400, ntheta: int = 6, nphi: int = 12,
              domain: Optional[DomainSpec] = None):
        radii = np.exp(np.linspace(np.log(r_min), np.log(r_max), nradii))
        if n == 3:
            # product rule: Gauss-Legendre in cos(theta) x uniform in phi,
            # exact for spherical harmonics up to degree min(2*ntheta-1,
            # nphi-1)
            ct, wt = np.polynomial.legendre.leggauss(ntheta)
            st = np.sqrt(1.0 - ct ** 2)
            phi = 2.0 * np.pi * np.arange(nphi) / nphi
            dirs = np.array([[s * np.cos(p), s * np.sin(p), c]
                             for c, s in zip(ct, st) for p in phi])
            wdirs = np.array([w * 2.0 * np.pi / nphi
                              for w in wt for _ in range(nphi)])
        else:
            dirs = np.zeros((0, n))
            wdirs = np.zeros(0)
        return cls(radii, dirs, wdirs, n, domain)

    def refine(self, factor: int = 2):
        r_min, r_max = float(self.radii[0]), float(self.radii[-1])
        nt = max(1, int(round(math.sqrt(self.dirs.shape[0] / 2)))) if \
            self.dirs.size else 6
        return ShellQuadrature.build(
            self.n, r_min, r_max, factor * len(self.radii),
            ntheta=factor * nt, nphi=2 * factor * nt, domain=self.domain)

    # -- evaluation ---------------------------------------------------
    def node_points(self, radii=None):
        radii = self.radii if radii is None else np.atleast_1d(radii)
        return (radii[:, None, None] * self.dirs[None, :, :]).reshape(
            -1, self.n)

    def node_scalars(self, fld, radii=None):
        """|field| at every node, shaped (nR, nd); zero inside obstacle."""
        radii = self.radii if radii is None else np.atleast_1d(radii)
        if getattr(fld, "radial", False):
            prof = np.abs(np.asarray(fld.profile(radii), dtype=complex))
            return prof
        if self.n != 3:
            raise UnsupportedDimension(
                "angular rule only for n = 3; wrap radial fields in "
                "RadialField")
        X = self.node_points(radii)
        vals = np.abs(np.asarray(fld.value_many(X)))
        vals = vals.reshape(len(radii), -1)
        if self.domain is not None and self.domain.kind != "none":
            mask = self.domain.mask(X).reshape(len(radii), -1)
            vals = np.where(mask, vals, 0.0)
        return vals

    def shell_integral(self, scalars, radii=None):
        """int over the sphere of radius R of scalars dS, per radius."""
        radii = self.radii if radii is None else np.atleast_1d(radii)
        if scalars.ndim == 1:         # radial fast path
            area = sphere_area(self.n)
            if self.domain is not None and self.domain.kind == "ball":
                area = np.where(radii >= self.domain.r0, area, 0.0)
            return area * radii ** (self.n - 1) * scalars
        return radii ** (self.n - 1) * (scalars @ self.wdirs)


# ---------------------------------------------------------------------------
# shell data: per-radius integrals of a nonnegative integrand


class ShellData:
    """I(R) on the grid plus an off-grid evaluator for local refinement."""

    def __init__(self, quad: ShellQuadrature, integrand):
        self.quad = quad
        self.integrand = integrand        # maps node scalars -> nonneg
        self.I = self._eval(quad.radii)

    def _eval(self, radii):
        vals = self.integrand(radii)
        return self.quad.shell_integral(vals, radii)

    def I_at(self, R):
        return float(self._eval(np.array([R]))[0])

    def cumulative(self):
        """cum(R) = int_0^R I(r) dr on the grid (head extrapolated)."""
        r = self.quad.radii
        head = self.I[0] * r[0] / self.quad.n
        cum = cumulative_trapezoid(self.I, r, initial=0.0) + head
        return cum

    def cum_at(self, cum, R):
        r = self.quad.radii
        return float(np.interp(R, r, cum))


def shell_data(fld, quad: ShellQuadrature, power: float = 2.0) -> ShellData:
    def integrand(radii):
        return quad.node_scalars(fld, radii) ** power
    return ShellData(quad, integrand)


def _product_shell_data(f1, f2, quad: ShellQuadrature) -> ShellData:
    def integrand(radii):
        return quad.node_scalars(f1, radii) * quad.node_scalars(f2, radii)
    return ShellData(quad, integrand)


def _golden_max(fun, lo, hi, rounds=3, samples=8):
    """Cheap bracketed maximization; returns the best value found."""
    best = -math.inf
    for _ in range(rounds):
        xs = np.linspace(lo, hi, samples)
        ys = [fun(x) for x in xs]
        k = int(np.argmax(ys))
        best = max(best, ys[k])
        lo = xs[max(k - 1, 0)]
        hi = xs[min(k + 1, samples - 1)]
    return best


def _sup_norm(sd: ShellData, weight, refine=True):
    """sup over R of I(R)/weight(R), with local refinement at the argmax."""
    r = sd.quad.radii
    g = sd.I / weight(r)
    i = int(np.argmax(g))
    sup = float(g[i])
    if refine and 0 < i < len(r) - 1:
        sup = max(sup, _golden_max(
            lambda R: sd.I_at(R) / weight(np.array([R]))[0],
            r[i - 1], r[i + 1]))
    return sup, float(r[i])


def _sup_cum(sd: ShellData, weight):
    r = sd.quad.radii
    cum = sd.cumulative()
    g = cum / weight(r)
    i = int(np.argmax(g))
    sup = float(g[i])
    if 0 < i < len(r) - 1:
        sup = max(sup, _golden_max(
            lambda R: sd.cum_at(cum, R) / weight(np.array([R]))[0],
            r[i - 1], r[i + 1]))
    return sup, float(r[i])


# ---------------------------------------------------------------------------
# the eight norms


def norm_Xdot(fld, quad, refine=True):
    sup, _ = _sup_norm(shell_data(fld, quad), lambda r: r ** 2, refine)
    return math.sqrt(max(sup, 0.0))


def norm_X(fld, quad, refine=True):
    sup, _ = _sup_norm(shell_data(fld, quad), lambda r: 1.0 + r ** 2, refine)
    return math.sqrt(max(sup, 0.0))


def norm_Ydot(fld, quad):
    sup, _ = _sup_cum(shell_data(fld, quad), lambda r: r)
    return math.sqrt(max(sup, 0.0))


def norm_Y(fld, quad):
    sup, _ = _sup_cum(shell_data(fld, quad), lambda r: np.sqrt(1.0 + r ** 2))
    return math.sqrt(max(sup, 0.0))


def _dyadic_l2(sd: ShellData, jmin: int, jmax: int):
    cum = sd.cumulative()
    out = {}
    for j in range(jmin, jmax + 1):
        lo, hi = 2.0 ** (j - 1), 2.0 ** j
        m = sd.cum_at(cum, hi) - sd.cum_at(cum, lo)
        out[j] = math.sqrt(max(m, 0.0))
    return out, cum


def norm_Ydot_dual(fld, quad, jmin: int = -10, jmax: int = 10):
    sd = shell_data(fld, quad)
    l2, _ = _dyadic_l2(sd, jmin, jmax)
    total = sum(2.0 ** (j / 2.0) * l2[j] for j in l2)
    tail = 2.0 ** (jmax / 2.0) * l2[jmax]
    if total > 0 and tail > 1e-6 * total:
        raise TruncatedTail(
            f"outermost dyadic shell carries {tail / total:.2e} of the sum")
    return total


def norm_Y_dual(fld, quad, jmax: int = 10):
    sd = shell_data(fld, quad)
    l2, cum = _dyadic_l2(sd, 1, jmax)
    core = math.sqrt(max(sd.cum_at(cum, 1.0), 0.0))
    total = core + sum(2.0 ** (j / 2.0) * l2[j] for j in l2)
    tail = 2.0 ** (jmax / 2.0) * l2[jmax]
    if total > 0 and tail > 1e-6 * total:
        raise TruncatedTail(
            f"outermost dyadic shell carries {tail / total:.2e} of the sum")
    return total


def norm_Ydot_dyadic(fld, quad, jmin: int = -10, jmax: int = 10):
    """sup_j 2^{-j/2} ||v||_{L2(shell_j)} (comparison norm)."""
    sd = shell_data(fld, quad)
    l2, _ = _dyadic_l2(sd, jmin, jmax)
    return max(2.0 ** (-j / 2.0) * l2[j] for j in l2)


def norm_Y_dyadic(fld, quad, jmax: int = 10):
    sd = shell_data(fld, quad)
    l2, cum = _dyadic_l2(sd, 1, jmax)
    core = math.sqrt(max(sd.cum_at(cum, 1.0), 0.0))
    return core + max(2.0 ** (-j / 2.0) * l2[j] for j in l2)


def _radial_integral(sd: ShellData, wfun, tail_frac=1e-6):
    r = sd.quad.radii
    vals = wfun(r) * np.sqrt(np.maximum(sd.I, 0.0))
    total = np.trapezoid(vals, r)
    tail = np.trapezoid(np.where(r >= r[-1] / 10.0, vals, 0.0), r)
    if total > 0 and tail > tail_frac * total:
        raise TruncatedTail(
            f"outer decade carries {tail / total:.2e} of the integral")
    return float(total)


def norm_Xdot_dual(fld, quad):
    return _radial_integral(shell_data(fld, quad), lambda r: r)


def norm_X_dual(fld, quad):
    return _radial_integral(shell_data(fld, quad),
                            lambda r: np.sqrt(1.0 + r ** 2))


@dataclass
class NormBundle:
    xdot: float
    x: float
    ydot: float
    y: float
    ydot_dual: float
    y_dual: float
    xdot_dual: float
    x_dual: float
    argmax: Dict[str, float] = field(default_factory=dict)

    def as_dict(self):
        d = {k: getattr(self, k) for k in
             ("xdot", "x", "ydot", "y", "ydot_dual", "y_dual",
              "xdot_dual", "x_dual")}
        d["argmax"] = self.argmax
        return d


def compute_bundle(fld, quad: ShellQuadrature,
                   duals: bool = True) -> NormBundle:
    """All eight norms of a field; duals=False skips the dual-side
    integrals (they diverge on slowly decaying fields and are only
    needed for sources)."""
    sd = shell_data(fld, quad)
    xd, rx = _sup_norm(sd, lambda r: r ** 2)
    xn, rxn = _sup_norm(sd, lambda r: 1.0 + r ** 2)
    yd, ry = _sup_cum(sd, lambda r: r)
    yn, ryn = _sup_cum(sd, lambda r: np.sqrt(1.0 + r ** 2))
    nan = float("nan")
    return NormBundle(
        xdot=math.sqrt(max(xd, 0.0)), x=math.sqrt(max(xn, 0.0)),
        ydot=math.sqrt(max(yd, 0.0)), y=math.sqrt(max(yn, 0.0)),
        ydot_dual=norm_Ydot_dual(fld, quad) if duals else nan,
        y_dual=norm_Y_dual(fld, quad) if duals else nan,
        xdot_dual=norm_Xdot_dual(fld, quad) if duals else nan,
        x_dual=norm_X_dual(fld, quad) if duals else nan,
        argmax={"xdot": rx, "x": rxn, "ydot": ry, "y": ryn})


# ---------------------------------------------------------------------------
# weighted volume integrals for the inequality battery


def _densify(r, I, factor: int = 4):
    """Refine (r, I) onto a finer log grid by log-log interpolation.

    Shell integrals behave like local power laws, which log-log linear
    interpolation reproduces exactly, so the trapezoid convexity error
    on steep kernels drops out.
    """
    t = np.log(r)
    td = np.linspace(t[0], t[-1], factor * (len(t) - 1) + 1)
    if np.all(I > 0):
        Id = np.exp(np.interp(td, t, np.log(I)))
    else:
        Id = np.interp(td, t, I)
    return np.exp(td), Id


def _volume_integral(sd: ShellData, wfun, region=None):
    """int w(|x|) g dx over the whole window or a radial sub-window.

    Region bounds are honored exactly (interpolated endpoint values), so
    annulus integrals do not leak past their edges.
    """
    r, I = _densify(sd.quad.radii, sd.I)
    vals = wfun(r) * I
    if region is None:
        head = wfun(r[:1])[0] * I[0] * r[0] / sd.quad.n
        return float(np.trapezoid(vals, r) + head)
    lo, hi = max(region[0], 0.0), min(region[1], float(r[-1]))
    head = 0.0
    if lo <= 0.0:
        head = wfun(r[:1])[0] * I[0] * r[0] / sd.quad.n
        lo = float(r[0])
    if hi <= lo:
        return head
    rs = np.concatenate([[lo], r[(r > lo) & (r < hi)], [hi]])
    vs = np.interp(rs, r, vals)
    return float(np.trapezoid(vs, rs) + head)


LEMMA_NAMES = (
    "weighted-Y-by-X", "weighted-Y-by-X-nonhom",
    "inv-square-bracket", "cubic-decay", "bracket-decay",
    "annulus-sup-nonhom", "annulus-sup-hom", "exterior-kernel-hom",
    "exterior-kernel-nonhom",
    "annulus-product-hom", "ball-product-dual-hom",
    "annulus-product-nonhom", "ball-product-dual-nonhom",
    "product-critical-hom", "product-critical-nonhom",
    "hardy", "hardy-Y", "gradient-product", "X-by-boundary-shells",
    "triple-weight",
)


def lemma_suite(make_v, b: Optional[VectorField], delta: float, trials: int,
                quad: ShellQuadrature, quad_slack: float = 1e-3):
    """Check every norm inequality on `trials` random test functions.

    make_v(i) must return a fresh TestFunction for trial i (pairs v, w
    are drawn as consecutive calls).  Returns a report per inequality
    with the worst LHS/RHS ratio; a ratio above 1 + quad_slack is a
    failure.
    """
    n = quad.n
    d = delta
    worst = {name: 0.0 for name in LEMMA_NAMES}

    def upd(name, lhs, rhs):
        if rhs <= 0.0:
            if lhs > 0.0:
                worst[name] = math.inf
            return
        worst[name] = max(worst[name], lhs / rhs)

    for t in range(trials):
        v = make_v(2 * t)
        w = make_v(2 * t + 1)
        sv = shell_data(v, quad)
        sw = shell_data(w, quad)
        svw = _product_shell_data(v, w, quad)
        gv = GradField(v, b)
        sg = shell_data(gv, quad)
        sgv = _product_shell_data(gv, v, quad)

        Xd = norm_Xdot(v, quad)
        Xn = norm_X(v, quad)
        Yd2, _ = _sup_cum(sv, lambda r: r)
        Yn2, _ = _sup_cum(sv, lambda r: np.sqrt(1.0 + r ** 2))
        wYd = norm_Ydot(w, quad)
        wYn = norm_Y(w, quad)
        wYds = norm_Ydot_dual(w, quad)
        wYns = norm_Y_dual(w, quad)
        gY2, _ = _sup_cum(sg, lambda r: np.sqrt(1.0 + r ** 2))

        # Lemma: |x|^{-1} v in Ydot by Xdot (and bracket version)
        inv = ShellData(quad, lambda radii, s=sv: s.integrand(radii)
                        / radii[:, None] ** 2 if s.integrand(radii).ndim > 1
                        else s.integrand(radii) / radii ** 2)
        sup_inv, _ = _sup_cum(inv, lambda r: r)
        upd("weighted-Y-by-X", math.sqrt(max(sup_inv, 0.0)), Xd)
        invb = ShellData(quad, lambda radii, s=sv:
                         s.integrand(radii) / (1 + radii[:, None] ** 2)
                         if s.integrand(radii).ndim > 1
                         else s.integrand(radii) / (1 + radii ** 2))
        sup_invb, _ = _sup_cum(invb, lambda r: np.sqrt(1 + r ** 2))
        upd("weighted-Y-by-X-nonhom", math.sqrt(max(sup_invb, 0.0)), Xn)

        # weighted L2 bounds
        upd("inv-square-bracket",
            _volume_integral(sv, lambda r: r ** -2
                             * (1 + r ** 2) ** (-(1 + d) / 2)),
            2.0 / d * Xd ** 2)
        upd("cubic-decay",
            _volume_integral(sv, lambda r: r ** (-3 - d),
                             region=(1.0, math.inf)),
            2.0 / d * Xn ** 2)
        upd("bracket-decay",
            _volume_integral(sv, lambda r: (1 + r ** 2) ** (-(1 + d) / 2)),
            8.0 / d * Yn2)

        # annulus sups
        cum = sv.cumulative()
        r_ = quad.radii

        def annulus_sup(lo_filter):
            best = 0.0
            for R in r_[(r_ >= lo_filter) & (2 * r_ <= r_[-1])]:
                m = _volume_integral(sv, lambda r: 1.0 / r,
                                     region=(R, 2 * R))
                best = max(best, m / R ** 2)
            return best

        upd("annulus-sup-nonhom", annulus_sup(1.0), 3.0 * Xn ** 2)
        upd("annulus-sup-hom", annulus_sup(0.0), 1.5 * Xd ** 2)

        def exterior_kernel(lo_filter):
            best = 0.0
            for R in r_[r_ >= lo_filter][::4]:
                m = _volume_integral(sv, lambda r: r ** (-n - 2),
                                     region=(R, math.inf))
                best = max(best, R ** (n - 1) * m)
            return best

        upd("exterior-kernel-hom", exterior_kernel(0.0),
            Xd ** 2 / (n - 1.0))
        upd("exterior-kernel-nonhom", exterior_kernel(1.0),
            2.0 * Xn ** 2 / (n - 1.0))

        # product estimates at a few radii
        for R in (0.5, 1.0, 3.0):
            pa = _volume_integral(svw, lambda r: np.ones_like(r),
                                  region=(R, 2 * R))
            pb = _volume_integral(svw, lambda r: np.ones_like(r),
                                  region=(0.0, R))
            upd("annulus-product-hom", pa, 3.0 * R ** 2 * Xd * wYd)
            upd("annulus-product-nonhom", pa,
                3.0 * (1 + R ** 2) * Xn * wYn)
            # the predual norms are dyadic sums here, which may undershoot
            # the true preduals by the dyadic comparison factor; fold that
            # factor into the bound
            upd("ball-product-dual-hom", pb, 2.0 * R * Xd * wYds)
            upd("ball-product-dual-nonhom", pb,
                3.0 * math.sqrt(1 + R ** 2) * Xn * wYns)

        upd("product-critical-hom",
            _volume_integral(svw, lambda r: r ** (d - 2),
                             region=(0.0, 1.0))
            + _volume_integral(svw, lambda r: r ** (-2 - d),
                               region=(1.0, math.inf)),
            9.0 / d * Xd * wYd)
        upd("product-critical-nonhom",
            _volume_integral(svw, lambda r: r ** (-2 - d),
                             region=(1.0, math.inf)),
            12.0 / d * Xn * wYn)

        # magnetic Hardy family (needs n >= 3 and Dirichlet data)
        l2v = _volume_integral(sv, lambda r: r ** -2)
        l2g = _volume_integral(sg, lambda r: np.ones_like(r))
        upd("hardy", math.sqrt(l2v), 2.0 / (n - 2.0) * math.sqrt(l2g))
        sup_invY, _ = _sup_cum(inv, lambda r: np.sqrt(1 + r ** 2))
        upd("hardy-Y", sup_invY, 6.0 * gY2 + 3.0 * Xn ** 2)
        upd("gradient-product",
            _volume_integral(sgv, lambda r: 1.0 / r, region=(0.0, 1.0))
            + _volume_integral(sgv, lambda r: r ** (-2 - d),
                               region=(1.0, math.inf)),
            9.0 / d * (gY2 + Xn ** 2))
        bshell = max((sv.I[i] / r_[i] ** 2
                      for i in range(len(r_)) if r_[i] > 1.0), default=0.0)
        upd("X-by-boundary-shells", Xn ** 2,
            4.0 * bshell + 13.0 * gY2)
        upd("triple-weight",
            _volume_integral(
                sv, lambda r: 1.0 / (r * (1 + r ** 2) ** ((1 + d) / 2)
                                     * np.maximum(1.0, r))),
            8.0 / d * Xn ** 2 + 9.0 * _volume_integral(
                sg, lambda r: np.ones_like(r), region=(0.0, 1.0)))

    report = []
    for name in LEMMA_NAMES:
        report.append({"name": name, "worst_ratio": worst[name],
                       "pass": bool(worst[name] <= 1.0 + quad_slack)})
    return report
