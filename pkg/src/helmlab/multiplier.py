"""Multiplier quantities and pointwise identity checks.

The flux vectors Q and P associated with the radial weight are assembled
as first-order jets (value plus gradient), so their divergences come out
in closed form by the chain rule.  Each identity is then checked by
comparing that divergence against the expanded right-hand side evaluated
directly; a finite-difference divergence of the same flux field serves
as an independent oracle in the tests.

Conventions.  The sesquilinear pairing conjugates its second slot,
a(w, z) = a_jk w_k conj(z_j).  The commutator quantity acting on the
conjugate solution equals the conjugate of [A^b, psi]v.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fields import (CoefficientSet, DomainSpec, EmptyObstacle, MatrixField,
                     TestFunction, apply_Ab, fd_derivative, norm_point)
from .jets import Jet, jet_const, jet_coords
from .norms import sphere_area
from .tjets import TJet, compose_radial, tjet_const, tjet_coords
from .weight import ConstPhi, LinearPsi, OriginPoint, SurfaceProximity, Weight

__all__ = [
    "MissingDerivative", "MissingBoundary", "MultiplierTerms",
    "weight_derivatives", "commutator_multiplier", "commutator_oracle",
    "identity_residual_prop21", "identity_residual_thm22",
    "alpha_and_split", "S_R_decomposition", "magnetic_term",
    "boundary_term", "flux_values", "flux_divergences", "divergence_fd",
    "multiplier_terms",
    "OriginPoint", "SurfaceProximity",
]


class MissingDerivative(Exception):
    """A coefficient or test function lacks the derivative order needed."""


class MissingBoundary(Exception):
    """Boundary data requested for a domain without usable boundary."""


# ---------------------------------------------------------------------------
# small jet helpers


def _radial_jet(x, f0, f1, f2) -> Jet:
    """Second-order jet of a radial scalar from (f, f', f'') at r = |x|."""
    x = np.asarray(x, dtype=float)
    r = norm_point(x)
    xh = x / r
    P = np.eye(x.shape[0]) - np.outer(xh, xh)
    return Jet(f0, f1 * xh, f2 * np.outer(xh, xh) + f1 * P / r)


def _djet(j: Jet, k: int) -> Jet:
    """First-order jet of the k-th partial of a second-order jet."""
    if j.hess is None:
        raise MissingDerivative("second derivatives required here")
    return Jet(j.grad[k], j.hess[k], None)


def _xhat_jets(x):
    xc = jet_coords(x)
    r2 = xc[0] * xc[0]
    for c in xc[1:]:
        r2 = r2 + c * c
    rj = r2.sqrt()
    return rj, [c / rj for c in xc]


class _PointState:
    """Everything the identities need at one evaluation point."""

    def __init__(self, coeffs: CoefficientSet, x, v: Optional[TestFunction],
                 psi, phi):
        x = np.asarray(x, dtype=float)
        self.x = x
        self.n = n = coeffs.n
        self.r = r = norm_point(x)
        if r <= 0.0:
            raise OriginPoint("multiplier quantities undefined at the origin")
        self.coeffs = coeffs

        a, d1, d2, d3 = coeffs.a.value_d3(x, order=3)
        if d3 is None:
            raise MissingDerivative("matrix field needs third derivatives")
        self.a, self.d1, self.d2, self.d3 = a, d1, d2, d3
        self.diva = np.einsum("jkj->k", d1)

        # entry jets of a (order 2) and of the column divergences
        self.a_jets = [[Jet(a[j, k], d1[j, k], d2[j, k]) for k in range(n)]
                       for j in range(n)]
        self.div_jets = [Jet(sum(d1[l, m, l] for l in range(n)),
                             sum(d2[l, m, l] for l in range(n)),
                             sum(d3[l, m, l] for l in range(n)))
                         for m in range(n)]

        self.rj, self.xh_jets = _xhat_jets(x)
        self.xh = x / r

        # scalar invariants of a as jets
        ah = jet_const(0.0, n)
        tr = jet_const(0.0, n)
        for j in range(n):
            tr = tr + self.a_jets[j][j]
            for k in range(n):
                ah = ah + self.a_jets[j][k] * self.xh_jets[j] * self.xh_jets[k]
        self.ahat_jet, self.abar_jet = ah, tr
        self.ahat = float(ah.val.real)
        self.abar = float(np.trace(a))

        # weight package
        self._build_psi(psi)
        self._build_phi(phi)

        # magnetic and potential data
        self.b, self.bjac = coeffs.b._value_jac(x)
        self.db = self.bjac.T - self.bjac
        self.cval, self.cgrad = coeffs.c._value_grad(x)

        # test function jets
        if v is not None:
            t = v.tjet(x) if isinstance(v, TestFunction) else v
            self.vt = t
            self.vj = Jet(t.val, t.g, t.h)
            self.dv = [Jet(t.g[k], t.h[k], t.t[k]) for k in range(n)]
            bj = [Jet(self.b[k], self.bjac[k], None) for k in range(n)]
            self.dbv = [self.dv[k] + 1j * bj[k] * self.vj for k in range(n)]
            self.cdbv = [d.conj() for d in self.dbv]
            self.absv2 = self.vj * self.vj.conj()
            ag = jet_const(0.0, n, order=2)
            for j in range(n):
                for k in range(n):
                    ag = ag + self.a_jets[j][k] * self.dbv[k] * self.cdbv[j]
            self.agrad_jet = ag
            self.Abv = apply_Ab(t, coeffs, x)

    # -- weights ------------------------------------------------------
    def _build_psi(self, psi):
        n = self.n
        if psi is None:
            z = jet_const(0.0, n)
            self.gpsi_jets = [z for _ in range(n)]
            self.Apsi_jet = z
            self.psi_derivs = (0.0, 0.0, 0.0, 0.0)
            return
        if isinstance(psi, LinearPsi):
            e = psi.e
            self.gpsi_jets = [jet_const(e[k], n) for k in range(n)]
            Ap = jet_const(0.0, n)
            for k in range(n):
                Ap = Ap + e[k] * self.div_jets[k]
            self.Apsi_jet = Ap
            self.psi_derivs = None
            return
        r = self.r
        p1, p2, p3, p4 = psi.derivs(r)
        self.psi_derivs = (p1, p2, p3, p4)
        Jp1 = _radial_jet(self.x, p1, p2, p3)
        Jp2 = _radial_jet(self.x, p2, p3, p4)
        g0 = p1 / r
        g1 = (p2 * r - p1) / r ** 2
        g2 = p3 / r - 2.0 * p2 / r ** 2 + 2.0 * p1 / r ** 3
        Jg = _radial_jet(self.x, g0, g1, g2)
        self.gpsi_jets = [Jp1 * self.xh_jets[k] for k in range(self.n)]
        Ap = self.ahat_jet * Jp2 + (self.abar_jet - self.ahat_jet) * Jg
        for m in range(self.n):
            Ap = Ap + self.div_jets[m] * self.xh_jets[m] * Jp1
        self.Apsi_jet = Ap

    def _build_phi(self, phi):
        if phi is None:
            phi = ConstPhi(0.0)
        self.phi = phi
        r = self.r
        p0 = phi.value(r)
        p1, p2, _, _ = phi.derivs(r)
        self.phi_scalars = (p0, p1, p2)
        self.phi_jet = _radial_jet(self.x, p0, p1, p2)
        self.Aphi = (self.ahat * p2 + (self.abar - self.ahat) * p1 / r
                     + float(sum(self.diva[m] * self.xh[m]
                                 for m in range(self.n))) * p1)

    # -- derived scalars ----------------------------------------------
    @property
    def gpsi(self):
        return np.array([j.val.real for j in self.gpsi_jets])

    @property
    def A2psi(self):
        Ap = self.Apsi_jet
        return complex(np.einsum("jk,jk->", self.a, Ap.hess)
                       + self.diva @ Ap.grad).real

    def a_bilinear(self, w, z):
        """a(w, z) = a_jk w_k conj(z_j) for plain value vectors."""
        return complex(np.conj(z) @ (self.a @ w))


def _as_V_jet(V, x, n):
    """Potential factor as a first-order jet; accepts None, a constant,
    a (value, grad) pair, or a field with value/grad evaluators."""
    if V is None:
        return Jet(0.0, np.zeros(n), None)
    if isinstance(V, (int, float, complex)):
        return Jet(V, np.zeros(n), None)
    if isinstance(V, tuple):
        return Jet(V[0], V[1], None)
    if hasattr(V, "_value_grad"):
        val, g = V._value_grad(x)
        return Jet(val, g, None)
    return Jet(V(x), V.grad(x), None)


# ---------------------------------------------------------------------------
# flux assembly


def _Q_jets(st: _PointState, Vjet: Jet):
    n = st.n
    comm = st.Apsi_jet * st.vj.conj()
    for j in range(n):
        for k in range(n):
            comm = comm + 2.0 * st.a_jets[j][k] * st.gpsi_jets[k] * st.cdbv[j]
    aq = Vjet * st.absv2 + st.agrad_jet
    Q = []
    for j in range(n):
        Qj = jet_const(0.0, n, order=1)
        for k in range(n):
            ajk = st.a_jets[j][k]
            Qj = (Qj + ajk * st.dbv[k] * comm
                  - 0.5 * ajk * _djet(st.Apsi_jet, k) * st.absv2
                  - ajk * st.gpsi_jets[k] * aq)
        Q.append(Qj)
    return Q, comm


def _P_jets(st: _PointState):
    n = st.n
    P = []
    for j in range(n):
        Pj = jet_const(0.0, n, order=1)
        for k in range(n):
            ajk = st.a_jets[j][k]
            Pj = (Pj + ajk * st.dbv[k] * st.phi_jet * st.vj.conj()
                  - 0.5 * ajk * _djet(st.phi_jet, k) * st.absv2)
        P.append(Pj)
    return P


def _alpha_matrix(st: _PointState, psi):
    """alpha_lm = 2 a_jm d_j(a_lk d_k psi) - a_jk d_k psi d_j a_lm."""
    n = st.n
    gpsi = st.gpsi
    if isinstance(psi, LinearPsi):
        hpsi = np.zeros((n, n))
    else:
        p1, p2, _, _ = st.psi_derivs
        P = np.eye(n) - np.outer(st.xh, st.xh)
        hpsi = p2 * np.outer(st.xh, st.xh) + p1 * P / st.r
    inner = np.einsum("lkj,k->lj", st.d1, gpsi) + st.a @ hpsi  # d_j(a_lk d_k psi)
    alpha = 2.0 * np.einsum("jm,lj->lm", st.a, inner)
    alpha -= np.einsum("jk,k,lmj->lm", st.a, gpsi, st.d1)
    return alpha


def _magnetic_value(st: _PointState):
    """2 Im[(a grad^b v) . db . (a grad psi) conj(v)]."""
    adbv = st.a @ np.array([d.val for d in st.dbv])
    agps = st.a @ st.gpsi
    return 2.0 * float(np.imag((adbv @ (st.db @ agps))
                               * np.conj(st.vj.val)))


# ---------------------------------------------------------------------------
# public operations


def weight_derivatives(R: float, n: int, x, margin: float = 0.05):
    """(psi', psi'', psi''', psi4_regular, surface_flag) at the point x."""
    r = norm_point(np.asarray(x, dtype=float))
    if r <= 0.0:
        raise OriginPoint("weight derivatives undefined at the origin")
    w = Weight(R, n)
    flag = abs(r - R) < margin * R
    return (*w.derivs(r), flag)


def commutator_multiplier(v, coeffs: CoefficientSet, psi, x,
                          margin: float = 0.05):
    """(A psi) conj(v) + 2 a(grad psi, grad^b v) at x."""
    r = norm_point(np.asarray(x, dtype=float))
    psi.guard(r, margin)
    st = _PointState(coeffs, x, v, psi, None)
    out = st.Apsi_jet.val * np.conj(st.vj.val)
    for j in range(st.n):
        for k in range(st.n):
            out += 2.0 * st.a[j, k] * st.gpsi[k] * st.cdbv[j].val
    return complex(out)


def commutator_oracle(v, coeffs: CoefficientSet, psi, x):
    """conj(A^b(psi v) - psi A^b v), evaluated through the operator."""
    x = np.asarray(x, dtype=float)
    r = norm_point(x)
    if isinstance(psi, LinearPsi):
        xc = tjet_coords(x)
        psival = tjet_const(0.0, coeffs.n)
        for i, e in enumerate(psi.e):
            psival = psival + float(e) * xc[i]
    else:
        p1, p2, p3, _ = psi.derivs(r)
        psival = compose_radial((psi.value(r), p1, p2, p3), x)
    vt = v.tjet(x) if isinstance(v, TestFunction) else v
    lhs = apply_Ab(psival * vt, coeffs, x) - psival.val * apply_Ab(vt, coeffs, x)
    return np.conj(lhs)


def identity_residual_prop21(v, coeffs: CoefficientSet, V, psi, phi, x,
                             relative: bool = False, margin: float = 0.05):
    """Residuals of the two divergence identities for general V.

    res1 checks Re div Q against its expansion; res2 checks div P.
    With relative=True each residual is divided by the sum of the
    magnitudes of the participating terms.
    """
    x = np.asarray(x, dtype=float)
    r = norm_point(x)
    psi.guard(r, margin)
    if phi is not None:
        phi.guard(r, margin)
    st = _PointState(coeffs, x, v, psi, phi)
    n = st.n
    Vjet = _as_V_jet(V, x, n)

    Q, comm = _Q_jets(st, Vjet)
    divQ = sum(Q[j].grad[j] for j in range(n))

    alpha = _alpha_matrix(st, psi)
    dbv_vals = np.array([d.val for d in st.dbv])
    T1 = np.real((st.Abv - Vjet.val * st.vj.val) * comm.val)
    T2 = -0.5 * st.A2psi * abs(st.vj.val) ** 2
    T3 = float(np.real(np.einsum("lm,m,l->", alpha, dbv_vals,
                                 np.conj(dbv_vals))))
    T4 = -float(np.real(np.conj(Vjet.grad) @ (st.a @ st.gpsi))) \
        * abs(st.vj.val) ** 2
    T5 = _magnetic_value(st)
    apsidbv = complex(np.conj(dbv_vals) @ (st.a @ st.gpsi))
    T6 = -2.0 * float(np.imag(Vjet.val)) * float(np.imag(apsidbv * st.vj.val))
    rhs1 = T1 + T2 + T3 + T4 + T5 + T6
    res1 = abs(np.real(divQ) - rhs1)
    scale1 = (abs(np.real(divQ)) + abs(T1) + abs(T2) + abs(T3) + abs(T4)
              + abs(T5) + abs(T6))

    P = _P_jets(st)
    divP = sum(P[j].grad[j] for j in range(n))
    p0, p1, _ = st.phi_scalars
    gphi = p1 * st.xh
    U1 = st.Abv * p0 * np.conj(st.vj.val)
    U2 = st.agrad_jet.val * p0
    U3 = -0.5 * st.Aphi * abs(st.vj.val) ** 2
    U4 = 1j * np.imag(np.conj(st.vj.val)
                      * complex(gphi @ (st.a @ dbv_vals)))
    rhs2 = U1 + U2 + U3 + U4
    res2 = abs(divP - rhs2)
    scale2 = abs(divP) + abs(U1) + abs(U2) + abs(U3) + abs(U4)

    if relative:
        res1 /= max(scale1, 1e-300)
        res2 /= max(scale2, 1e-300)
    return float(res1), float(res2)


def identity_residual_thm22(v, coeffs: CoefficientSet, lam: float, eps: float,
                            psi, phi, x, relative: bool = False,
                            margin: float = 0.05):
    """Residuals of the combined flux identity and the secondary identity.

    The source is taken as f := A^b v - c v + (lam + i eps) v, so the
    Helmholtz equation holds exactly for the supplied v.
    """
    x = np.asarray(x, dtype=float)
    r = norm_point(x)
    psi.guard(r, margin)
    if phi is not None:
        phi.guard(r, margin)
    st = _PointState(coeffs, x, v, psi, phi)
    n = st.n
    Vjet = Jet(st.cval - lam, st.cgrad, None)

    Q, comm = _Q_jets(st, Vjet)
    P = _P_jets(st)
    divQ = sum(Q[j].grad[j] for j in range(n))
    divP = sum(P[j].grad[j] for j in range(n))

    vval = st.vj.val
    f = st.Abv - st.cval * vval + (lam + 1j * eps) * vval
    absv2 = abs(vval) ** 2
    p0, p1, _ = st.phi_scalars
    alpha = _alpha_matrix(st, psi)
    dbv_vals = np.array([d.val for d in st.dbv])
    apsidbv = complex(np.conj(dbv_vals) @ (st.a @ st.gpsi))
    agradval = float(np.real(st.agrad_jet.val))

    W1 = -0.5 * (st.A2psi + st.Aphi) * absv2
    agpc = float(st.cgrad @ (st.a @ st.gpsi))
    W2 = -(agpc - st.cval * p0 + lam * p0) * absv2
    W3 = float(np.real(np.einsum("lm,m,l->", alpha, dbv_vals,
                                 np.conj(dbv_vals))))
    W4 = agradval * p0
    W5 = 2.0 * eps * float(np.imag(apsidbv * vval))
    W6 = _magnetic_value(st)
    W7 = float(np.real((st.Apsi_jet.val + p0) * np.conj(vval) * f
                       + 2.0 * apsidbv * f))
    rhs1 = W1 + W2 + W3 + W4 + W5 + W6 + W7
    lhs1 = float(np.real(divQ + divP))
    res1 = abs(lhs1 - rhs1)
    scale1 = abs(lhs1) + sum(abs(t) for t in (W1, W2, W3, W4, W5, W6, W7))

    gphi = p1 * st.xh
    Z1 = agradval * p0
    Z2 = (st.cval - lam - 1j * eps) * absv2 * p0
    Z3 = f * np.conj(vval) * p0
    Z4 = -0.5 * st.Aphi * absv2
    Z5 = 1j * np.imag(np.conj(vval) * complex(gphi @ (st.a @ dbv_vals)))
    rhs2 = Z1 + Z2 + Z3 + Z4 + Z5
    res2 = abs(divP - rhs2)
    scale2 = abs(divP) + sum(abs(t) for t in (Z1, Z2, Z3, Z4, Z5))

    if relative:
        res1 /= max(scale1, 1e-300)
        res2 /= max(scale2, 1e-300)
    return float(res1), float(res2)


def alpha_and_split(coeffs: CoefficientSet, psi, x):
    """(alpha, s_matrix, r_matrix) with alpha = s + r for radial weights."""
    x = np.asarray(x, dtype=float)
    st = _PointState(coeffs, x, None, psi, None)
    alpha = _alpha_matrix(st, psi)
    if isinstance(psi, LinearPsi):
        return alpha, None, None
    p1, p2, _, _ = st.psi_derivs
    r = st.r
    axh = st.a @ st.xh
    s = (2.0 * (p2 - p1 / r) * np.outer(axh, axh)
         + 2.0 * (p1 / r) * (st.a.T @ st.a))
    rmat = np.einsum("jm,lkj,k->lm", 2.0 * st.a, st.d1, st.xh) * p1
    rmat -= np.einsum("jk,k,lmj->lm", st.a, st.xh, st.d1) * p1
    return alpha, s, rmat


def S_R_decomposition(coeffs: CoefficientSet, psi: Weight, x,
                      consts: Optional[dict] = None, margin: float = 0.05):
    """Split the second application of A to psi into the structured part
    and the coefficient-derivative remainder.

    When consts supplies {C_a, N} (and coeffs carries delta) the
    remainder is checked against its decay budget and an AssertionError
    reports any violation.
    """
    x = np.asarray(x, dtype=float)
    r = norm_point(x)
    psi.guard(r, margin)
    st = _PointState(coeffs, x, None, psi, None)
    p1, p2, p3, p4 = st.psi_derivs
    a = st.a
    ahat = st.ahat
    abar = st.abar
    ahs2 = float(np.sum(a * a))
    axh2 = float(np.sum((a @ st.xh) ** 2))
    S = (ahat ** 2 * p4
         + (2.0 * abar * ahat - 6.0 * ahat ** 2 + 4.0 * axh2) * p3 / r
         + (2.0 * ahs2 + abar ** 2 - 6.0 * abar * ahat + 15.0 * ahat ** 2
            - 12.0 * axh2) * (p2 / r ** 2 - p1 / r ** 3))
    Rrem = st.A2psi - S
    if consts is not None:
        Ca = consts["C_a"]
        N = consts["N"]
        bound = (12.0 * st.n * Ca * (N + Ca)
                 / (r * math.sqrt(1.0 + r * r) ** (1.0 + coeffs.delta)
                    * max(psi.R, r)))
        if abs(Rrem) > bound + 1e-14:
            raise AssertionError(
                f"remainder {Rrem:.3e} exceeds its decay budget {bound:.3e} "
                f"at |x| = {r:.4g}")
    return float(S), float(Rrem)


def magnetic_term(v, coeffs: CoefficientSet, psi, x):
    """(I_b, bound, ok): the rotation-coupling term and its pointwise
    budget N^2 |db| |grad^b v| |v| (which uses psi' <= 1/2)."""
    x = np.asarray(x, dtype=float)
    st = _PointState(coeffs, x, v, psi, None)
    val = _magnetic_value(st)
    N = float(np.linalg.norm(st.a, 2))
    db_norm = float(np.linalg.norm(st.db, 2))
    gb = float(np.linalg.norm([d.val for d in st.dbv]))
    bound = N ** 2 * db_norm * gb * abs(st.vj.val)
    return val, bound, abs(val) <= bound + 1e-12 * (1.0 + bound)


def boundary_term(domain: DomainSpec, a: MatrixField, dn, psi,
                  nsamples: int = 400, rng=None):
    """Surface quadrature of |d_nu v|^2 a(nu,nu) a(xhat,nu) psi'.

    dn is a callable (x, nu) -> complex normal derivative of v, or a
    precomputed array aligned with the generated boundary samples.
    Returns 0.0 for the whole space.  For a ball obstacle the quadrature
    carries the exact surface area; for a level set the equal-weight
    average is returned (sign checks only).
    """
    if domain.kind == "none":
        return 0.0
    try:
        pts, nrm = domain.boundary_samples(nsamples, rng=rng)
    except EmptyObstacle:
        return 0.0
    if len(pts) == 0:
        raise MissingBoundary("no boundary samples could be generated")
    vals = np.empty(len(pts))
    for i, (x, nu) in enumerate(zip(pts, nrm)):
        g = dn[i] if not callable(dn) else dn(x, nu)
        A = a(x)
        r = norm_point(x)
        p1 = psi.derivs(r)[0]
        vals[i] = (abs(g) ** 2 * float(nu @ (A @ nu))
                   * float(nu @ (A @ (x / r))) * p1)
    if domain.kind == "ball":
        area = sphere_area(domain.n) * domain.r0 ** (domain.n - 1)
        return float(np.mean(vals) * area)
    return float(np.mean(vals))


def flux_values(v, coeffs: CoefficientSet, V, psi, phi, x):
    """Plain values of the flux vectors (Q, P) at x, for oracles."""
    x = np.asarray(x, dtype=float)
    st = _PointState(coeffs, x, v, psi, phi)
    Vjet = _as_V_jet(V, x, st.n)
    Q, _ = _Q_jets(st, Vjet)
    P = _P_jets(st)
    return (np.array([q.val for q in Q]), np.array([p.val for p in P]))


def flux_divergences(v, coeffs: CoefficientSet, V, psi, phi, x):
    """Closed-form divergences (div Q, div P) at x from the jet path."""
    x = np.asarray(x, dtype=float)
    st = _PointState(coeffs, x, v, psi, phi)
    Vjet = _as_V_jet(V, x, st.n)
    Q, _ = _Q_jets(st, Vjet)
    P = _P_jets(st)
    divQ = complex(sum(Q[j].grad[j] for j in range(st.n)))
    divP = complex(sum(P[j].grad[j] for j in range(st.n)))
    return divQ, divP


def divergence_fd(field_fun, x, h: Optional[float] = None):
    """4th-order finite-difference divergence of a vector field callable."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-3 * norm_point(x)
    return complex(sum(fd_derivative(field_fun, x, j, h=h)[j]
                       for j in range(x.shape[0])))


@dataclass
class MultiplierTerms:
    Q: Optional[np.ndarray]
    P: Optional[np.ndarray]
    alpha: np.ndarray
    Apsi: float
    S: float
    Rrem: float
    s_matrix: Optional[np.ndarray]
    r_matrix: Optional[np.ndarray]


def multiplier_terms(coeffs: CoefficientSet, psi, x, v=None, phi=None,
                     V=None, margin: float = 0.05) -> MultiplierTerms:
    """Bundle of every pointwise multiplier quantity at x."""
    x = np.asarray(x, dtype=float)
    r = norm_point(x)
    psi.guard(r, margin)
    alpha, s, rmat = alpha_and_split(coeffs, psi, x)
    st = _PointState(coeffs, x, v, psi, phi)
    if isinstance(psi, Weight):
        S, Rrem = S_R_decomposition(coeffs, psi, x, margin=margin)
    else:
        S, Rrem = float("nan"), float("nan")
    Qv = Pv = None
    if v is not None:
        Qv, Pv = flux_values(v, coeffs, V, psi, phi, x)
    return MultiplierTerms(Qv, Pv, alpha, float(st.Apsi_jet.val.real),
                           S, Rrem, s, rmat)
