"""Coefficient fields, exterior domains and analytic test functions.

The matrix field a(x), vector field b(x) and potential c(x) carry exact
derivative evaluators up to the order the multiplier identities need
(three for a, one for b and c).  Analytic presets are built from
third-order jets; user-supplied callables fall back to fourth-order
central differences.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tjets import TJet, compose_radial, tjet_const, tjet_coords, tjet_exp

__all__ = [
    "norm_point", "unit_vector", "bracket",
    "MatrixField", "VectorField", "PotentialField", "CoefficientSet",
    "DomainSpec", "TestFunction", "GaussianTerm",
    "covariant_grad", "apply_Ab", "starshaped_check",
    "fd_gradient", "fd_derivative",
    "EmptyObstacle", "DegenerateNormal",
]


class EmptyObstacle(Exception):
    """Raised where an operation needs a nonempty obstacle boundary."""


class DegenerateNormal(Exception):
    """Level-set gradient vanished at a boundary sample."""


def norm_point(x):
    return float(np.linalg.norm(x))


def unit_vector(x):
    r = norm_point(x)
    if r == 0.0:
        raise ValueError("unit vector undefined at the origin")
    return np.asarray(x, dtype=float) / r


def bracket(r):
    """Japanese bracket <r> = sqrt(1 + r^2), elementwise."""
    return np.sqrt(1.0 + np.asarray(r, dtype=float) ** 2)


# ---------------------------------------------------------------------------
# finite-difference fallbacks (4th order central)

_FD4_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])
_FD4_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def fd_derivative(f: Callable, x, direction: int, h: Optional[float] = None):
    """4th-order central difference of f along a coordinate direction.

    f may return a scalar or an ndarray; the result has the same shape.
    """
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-4 * max(1.0, norm_point(x))
    acc = None
    for off, w in zip(_FD4_OFFSETS, _FD4_WEIGHTS):
        xp = x.copy()
        xp[direction] += off * h
        term = w * np.asarray(f(xp))
        acc = term if acc is None else acc + term
    return acc / h


def fd_gradient(f: Callable, x, h: Optional[float] = None):
    x = np.asarray(x, dtype=float)
    return np.stack([fd_derivative(f, x, i, h) for i in range(x.shape[0])],
                    axis=-1)


# ---------------------------------------------------------------------------
# matrix field a(x)


class MatrixField:
    """Symmetric matrix field with derivatives up to order three.

    The low-level contract is value_d3(x) -> (a, d1, d2, d3) where
    d1[j,k,m] = da_jk/dx_m, d2[j,k,l,m] = d2 a_jk/dx_l dx_m and
    d3[j,k,l,m,p] the third derivatives.
    """

    def __init__(self, n: int, entry_tjets: Optional[Callable] = None,
                 value: Optional[Callable] = None,
                 provenance: str = "analytic"):
        if n < 3:
            raise ValueError("dimension must be >= 3")
        self.n = n
        self.provenance = provenance
        if entry_tjets is not None:
            self._entry_tjets = entry_tjets
        elif value is not None:
            self._value_only = value
            self._entry_tjets = None
            self.provenance = "finite-difference"
        else:
            raise ValueError("need entry_tjets or value callable")

    # constructors ----------------------------------------------------
    @classmethod
    def constant(cls, A):
        A = np.asarray(A, dtype=float)
        n = A.shape[0]

        def entries(x):
            return [[tjet_const(A[j, k], n) for k in range(n)]
                    for j in range(n)]

        out = cls(n, entry_tjets=entries)
        out.constant_matrix = A
        return out

    @classmethod
    def identity(cls, n):
        return cls.constant(np.eye(n))

    @classmethod
    def isotropic_radial(cls, n, alpha_derivs: Callable):
        """a(x) = alpha(|x|) I with alpha_derivs(r) -> (a0,a1,a2,a3)."""

        def entries(x):
            aj = compose_radial(alpha_derivs(norm_point(x)), x)
            zero = tjet_const(0.0, n)
            return [[aj if j == k else zero for k in range(n)]
                    for j in range(n)]

        f = cls(n, entry_tjets=entries)
        f.alpha_derivs = alpha_derivs
        return f

    @classmethod
    def diagonal_radial(cls, n, diag_derivs: Sequence[Callable]):
        """a = diag(alpha_1(|x|), ..., alpha_n(|x|))."""

        def entries(x):
            zero = tjet_const(0.0, n)
            diag = [compose_radial(d(norm_point(x)), x) for d in diag_derivs]
            return [[diag[j] if j == k else zero for k in range(n)]
                    for j in range(n)]

        return cls(n, entry_tjets=entries)

    @classmethod
    def from_tjet_matrix(cls, n, builder: Callable):
        """builder(x) -> n x n nested list of TJet entries."""
        return cls(n, entry_tjets=builder)

    @classmethod
    def from_callable(cls, value: Callable, n: int):
        """Finite-difference derivatives; value(x) -> (n, n) array."""
        return cls(n, value=value)

    # evaluation ------------------------------------------------------
    def __call__(self, x):
        a, _, _, _ = self.value_d3(x, order=0)
        return a

    def value_d3(self, x, order: int = 3):
        n = self.n
        if self._entry_tjets is not None:
            E = self._entry_tjets(np.asarray(x, dtype=float))
            a = np.array([[E[j][k].val.real for k in range(n)]
                          for j in range(n)])
            if order == 0:
                return a, None, None, None
            d1 = np.array([[E[j][k].g.real for k in range(n)]
                           for j in range(n)])
            d2 = np.array([[E[j][k].h.real for k in range(n)]
                           for j in range(n)])
            d3 = np.array([[E[j][k].t.real for k in range(n)]
                           for j in range(n)])
            return a, d1, d2, d3
        # numeric fallback
        a = np.asarray(self._value_only(x), dtype=float)
        if order == 0:
            return a, None, None, None
        d1 = np.transpose(fd_gradient(self._value_only, x), (0, 1, 2))
        d2 = np.stack([fd_gradient(
            lambda y, m=m: fd_derivative(self._value_only, y, m), x)
            for m in range(n)], axis=-1)
        d2 = np.transpose(d2, (0, 1, 3, 2))
        if order <= 2:
            return a, d1, d2, None
        d3 = np.zeros((n, n, n, n, n))
        for l in range(n):
            for m in range(n):
                d3[:, :, l, m, :] = fd_gradient(
                    lambda y, l=l, m=m: fd_derivative(
                        lambda z: fd_derivative(self._value_only, z, m),
                        y, l), x)
        return a, d1, d2, d3

    def check_symmetry(self, x, tol=1e-12):
        a = self(x)
        return float(np.max(np.abs(a - a.T))) <= tol

    def deriv_budget(self, x):
        """|a'| + |x| |a''| + |x|^2 |a'''| with the multi-index sum of
        operator norms convention."""
        _, d1, d2, d3 = self.value_d3(x)
        r = norm_point(x)

        def opnorm(M):
            return float(np.linalg.norm(M, 2))

        n = self.n
        s1 = sum(opnorm(d1[:, :, m]) for m in range(n))
        # multi-index |alpha|=2: unordered pairs (l<=m)
        s2 = sum(opnorm(d2[:, :, l, m]) for l in range(n) for m in range(l, n))
        s3 = 0.0
        for l in range(n):
            for m in range(l, n):
                for p in range(m, n):
                    s3 += opnorm(d3[:, :, l, m, p])
        return s1 + r * s2 + r * r * s3


# ---------------------------------------------------------------------------
# vector field b(x)


class VectorField:
    """Real vector field with first derivatives; db is the curl matrix."""

    def __init__(self, n: int, value_jac: Callable):
        self.n = n
        self._value_jac = value_jac  # x -> (b (n,), jac (n,n)) jac[l,m]=d_m b_l

    @classmethod
    def zero(cls, n):
        def vj(x):
            return np.zeros(n), np.zeros((n, n))
        out = cls(n, vj)
        out._identically_zero = True
        return out

    @classmethod
    def from_tjets(cls, n, comp_tjets: Callable):
        """comp_tjets(x) -> list of n TJet components."""

        def vj(x):
            comps = comp_tjets(np.asarray(x, dtype=float))
            b = np.array([c.val.real for c in comps])
            jac = np.array([c.g.real for c in comps])
            return b, jac

        return cls(n, vj)

    @classmethod
    def from_callable(cls, value: Callable, n: int):
        def vj(x):
            b = np.asarray(value(x), dtype=float)
            jac = fd_gradient(value, x)
            return b, jac
        return cls(n, vj)

    def __call__(self, x):
        return self._value_jac(x)[0]

    def jacobian(self, x):
        return self._value_jac(x)[1]

    def db(self, x):
        """Antisymmetric matrix db[j,l] = d_j b_l - d_l b_j."""
        jac = self.jacobian(x)
        return jac.T - jac

    def is_zero(self):
        return getattr(self, "_identically_zero", False)


def _mark_zero(b: VectorField) -> VectorField:
    b._identically_zero = True
    return b


# ---------------------------------------------------------------------------
# scalar potential c(x)


class PotentialField:
    def __init__(self, n: int, value_grad: Callable):
        self.n = n
        self._value_grad = value_grad

    @classmethod
    def zero(cls, n):
        def vg(x):
            return 0.0, np.zeros(n)
        return cls(n, vg)

    @classmethod
    def radial(cls, n, derivs: Callable):
        """derivs(r) -> (c, c') for the radial profile."""

        def vg(x):
            r = norm_point(x)
            c0, c1 = derivs(r)
            return float(c0), c1 * unit_vector(x)

        return cls(n, vg)

    @classmethod
    def inverse_square(cls, n, C: float):
        """c(x) = C / |x|^2 (repulsive for C >= 0 and any a > 0)."""

        def vg(x):
            r2 = float(np.dot(x, x))
            return C / r2, -2.0 * C * np.asarray(x, float) / r2 ** 2

        return cls(n, vg)

    @classmethod
    def from_callable(cls, value: Callable, n: int):
        def vg(x):
            return float(value(x)), fd_gradient(value, x)
        return cls(n, vg)

    def __call__(self, x):
        return self._value_grad(x)[0]

    def grad(self, x):
        return self._value_grad(x)[1]


@dataclass
class CoefficientSet:
    a: MatrixField
    b: VectorField
    c: PotentialField
    delta: float
    n: int

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie strictly in (0, 1)")
        if not (self.a.n == self.b.n == self.c.n == self.n):
            raise ValueError("dimension mismatch between coefficient fields")


# ---------------------------------------------------------------------------
# exterior domains


class DomainSpec:
    """Exterior domain: complement of an empty set, a ball, or a level set."""

    def __init__(self, n: int, kind: str = "none", r0: float = 0.0,
                 levelset: Optional[Callable] = None,
                 seed_centers: Optional[Sequence] = None):
        if kind not in ("none", "ball", "levelset"):
            raise ValueError(f"unknown obstacle kind {kind!r}")
        if kind == "ball" and r0 <= 0.0:
            raise ValueError("ball obstacle needs r0 > 0")
        self.n = n
        self.kind = kind
        self.r0 = float(r0)
        self.levelset = levelset
        self.seed_centers = seed_centers

    @classmethod
    def whole_space(cls, n):
        return cls(n, "none")

    @classmethod
    def ball(cls, n, r0):
        return cls(n, "ball", r0=r0)

    def contains(self, x):
        """True if x lies in Omega (outside the obstacle)."""
        if self.kind == "none":
            return True
        if self.kind == "ball":
            return norm_point(x) >= self.r0
        return self.levelset(x) >= 0.0

    def mask(self, X):
        """Vectorized membership for an (N, n) array of points."""
        X = np.asarray(X, dtype=float)
        if self.kind == "none":
            return np.ones(X.shape[0], dtype=bool)
        if self.kind == "ball":
            return np.linalg.norm(X, axis=1) >= self.r0
        return np.array([self.levelset(x) >= 0.0 for x in X])

    def boundary_samples(self, nsamples: int, rng=None):
        """Boundary points with the exterior normal of Omega.

        Returns (points (N, n), normals (N, n)).  The exterior normal
        points out of Omega, i.e. into the obstacle.
        """
        if self.kind == "none":
            raise EmptyObstacle("whole space has no obstacle boundary")
        rng = np.random.default_rng(rng)
        dirs = rng.normal(size=(nsamples, self.n))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        if self.kind == "ball":
            pts = self.r0 * dirs
            return pts, -dirs
        pts = []
        nrm = []
        centers = self.seed_centers or [np.zeros(self.n)]
        per = max(1, nsamples // len(centers))
        for c in centers:
            c = np.asarray(c, dtype=float)
            for d in dirs[:per]:
                x = c + 3.0 * d
                ok = False
                for _ in range(60):
                    phi = self.levelset(x)
                    g = fd_gradient(self.levelset, x, h=1e-6)
                    gn = np.linalg.norm(g)
                    if gn < 1e-10:
                        raise DegenerateNormal(
                            f"level-set gradient vanished near {x}")
                    step = phi * g / gn ** 2
                    x = x - step
                    if abs(phi) < 1e-11:
                        ok = True
                        break
                if ok:
                    g = fd_gradient(self.levelset, x, h=1e-6)
                    pts.append(x)
                    nrm.append(-g / np.linalg.norm(g))
        return np.array(pts), np.array(nrm)


# ---------------------------------------------------------------------------
# analytic test functions


@dataclass
class GaussianTerm:
    """coef * prod_i (x_i - x0_i)^e_i * exp(-|x - x0|^2 / sigma^2 + i k.x)."""
    coef: complex
    x0: np.ndarray
    sigma: float
    k: np.ndarray
    expo: np.ndarray  # integer exponents, degree <= 2 overall

    def value_many(self, X):
        U = X - self.x0[None, :]
        mono = np.ones(X.shape[0])
        for i, e in enumerate(self.expo):
            if e:
                mono = mono * U[:, i] ** e
        phase = np.exp(-np.sum(U * U, axis=1) / self.sigma ** 2
                       + 1j * X @ self.k)
        return self.coef * mono * phase

    def grad_many(self, X):
        U = X - self.x0[None, :]
        vals = self.value_many(X)
        g = np.zeros((X.shape[0], X.shape[1]), dtype=complex)
        base = -2.0 * U / self.sigma ** 2 + 1j * self.k[None, :]
        mono = np.ones(X.shape[0])
        for i, e in enumerate(self.expo):
            if e:
                mono = mono * U[:, i] ** e
        phase = np.exp(-np.sum(U * U, axis=1) / self.sigma ** 2
                       + 1j * X @ self.k)
        for i in range(X.shape[1]):
            gm = np.zeros(X.shape[0])
            e = self.expo[i]
            if e:
                rest = np.ones(X.shape[0])
                for j, ej in enumerate(self.expo):
                    if j == i:
                        if ej > 1:
                            rest = rest * U[:, j] ** (ej - 1)
                    elif ej:
                        rest = rest * U[:, j] ** ej
                gm = e * rest
            g[:, i] = self.coef * phase * (gm + mono * base[:, i])
        return g

    def tjet(self, x) -> TJet:
        n = x.shape[0]
        xc = tjet_coords(x)
        expo_arg = tjet_const(0.0, n)
        mono = tjet_const(1.0, n)
        for i in range(n):
            u = xc[i] - self.x0[i]
            expo_arg = expo_arg + (-1.0 / self.sigma ** 2) * (u * u)
            expo_arg = expo_arg + (1j * self.k[i]) * xc[i]
            for _ in range(int(self.expo[i])):
                mono = mono * u
        return self.coef * (mono * tjet_exp(expo_arg))


class TestFunction:
    """Finite sum of Gaussian x polynomial x plane-wave terms.

    Optionally multiplied by a smooth radial cutoff vanishing to second
    order at |x| = r0 (so Dirichlet data on a ball obstacle is exact).

    Not a test case despite the name (the __test__ flag keeps pytest
    collection away).
    """

    __test__ = False

    def __init__(self, terms: Sequence[GaussianTerm], n: int,
                 cutoff_r0: float = 0.0, cutoff_width: float = 1.0):
        self.terms = list(terms)
        self.n = n
        self.cutoff_r0 = float(cutoff_r0)
        self.cutoff_width = float(cutoff_width)

    # cutoff chi = 1 - exp(-q^2), q = (|x|^2 - r0^2)/w  (analytic)
    def _chi_many(self, X):
        if self.cutoff_r0 <= 0.0:
            return np.ones(X.shape[0])
        q = (np.sum(X * X, axis=1) - self.cutoff_r0 ** 2) / self.cutoff_width
        chi = 1.0 - np.exp(-q * q)
        chi[np.linalg.norm(X, axis=1) < self.cutoff_r0] = 0.0
        return chi

    def _chi_grad_many(self, X):
        if self.cutoff_r0 <= 0.0:
            return np.zeros_like(X)
        w = self.cutoff_width
        q = (np.sum(X * X, axis=1) - self.cutoff_r0 ** 2) / w
        dchi = np.exp(-q * q) * 2.0 * q  # d chi / d q
        g = dchi[:, None] * (2.0 * X / w)
        g[np.linalg.norm(X, axis=1) < self.cutoff_r0] = 0.0
        return g

    def _chi_tjet(self, x) -> TJet:
        n = x.shape[0]
        xc = tjet_coords(x)
        s = tjet_const(-self.cutoff_r0 ** 2, n)
        for i in range(n):
            s = s + xc[i] * xc[i]
        q = (1.0 / self.cutoff_width) * s
        return tjet_const(1.0, n) - tjet_exp(-(q * q))

    # public evaluation ----------------------------------------------
    def value_many(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0], dtype=complex)
        for t in self.terms:
            out += t.value_many(X)
        return out * self._chi_many(X)

    def grad_many(self, X):
        X = np.asarray(X, dtype=float)
        v = np.zeros(X.shape[0], dtype=complex)
        g = np.zeros(X.shape, dtype=complex)
        for t in self.terms:
            v += t.value_many(X)
            g += t.grad_many(X)
        chi = self._chi_many(X)
        gchi = self._chi_grad_many(X)
        return g * chi[:, None] + v[:, None] * gchi

    def __call__(self, x):
        return self.value_many(np.asarray(x, dtype=float)[None, :])[0]

    def tjet(self, x) -> TJet:
        x = np.asarray(x, dtype=float)
        out = tjet_const(0.0, self.n)
        for t in self.terms:
            out = out + t.tjet(x)
        if self.cutoff_r0 > 0.0:
            out = out * self._chi_tjet(x)
        return out

    def grad(self, x):
        return self.tjet(x).g

    def hess(self, x):
        return self.tjet(x).h

    # catalog --------------------------------------------------------
    @classmethod
    def gaussian(cls, n, x0=None, sigma=1.0, k=None, expo=None, coef=1.0,
                 cutoff_r0=0.0, cutoff_width=1.0):
        x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
        k = np.zeros(n) if k is None else np.asarray(k, float)
        expo = np.zeros(n, int) if expo is None else np.asarray(expo, int)
        term = GaussianTerm(complex(coef), x0, float(sigma), k, expo)
        return cls([term], n, cutoff_r0, cutoff_width)

    @classmethod
    def random(cls, n, rng, nterms=2, cutoff_r0=0.0, cutoff_width=1.0,
               max_degree=2):
        terms = []
        for _ in range(nterms):
            coef = rng.normal() + 1j * rng.normal()
            x0 = rng.normal(scale=1.0, size=n)
            sigma = rng.uniform(0.6, 2.0)
            k = rng.normal(scale=1.0, size=n)
            expo = np.zeros(n, int)
            deg = rng.integers(0, max_degree + 1)
            for _ in range(deg):
                expo[rng.integers(0, n)] += 1
            terms.append(GaussianTerm(coef, x0, sigma, k, expo))
        return cls(terms, n, cutoff_r0, cutoff_width)


# ---------------------------------------------------------------------------
# operators


def covariant_grad(v, b: VectorField, x):
    """(grad + i b) v at x; v is a TestFunction or (value, grad) pair."""
    if isinstance(v, TestFunction):
        j = v.tjet(x)
        val, g = j.val, j.g
    else:
        val, g = v
    return g + 1j * b(x) * val


def apply_Ab(v, coeffs: CoefficientSet, x):
    """Magnetic divergence-form operator applied to v at x.

    Expansion: d_j(a_jk d_k v) + i d_j(a_jk b_k v) + i b_j a_jk d_k v
               - b_j a_jk b_k v.
    """
    x = np.asarray(x, dtype=float)
    j = v.tjet(x) if isinstance(v, TestFunction) else v
    a, d1, _, _ = coeffs.a.value_d3(x, order=3)
    bval, bjac = coeffs.b._value_jac(x)
    grad_v, hess_v = j.g, j.h
    diva = np.einsum("jkj->k", d1)  # d_j a_jk
    term_principal = np.einsum("jk,jk->", a, hess_v) + diva @ grad_v
    w = a @ bval  # (a b)_j
    # d_j (a_jk b_k) = (d_j a_jk) b_k + a_jk d_j b_k ; bjac[l,m] = d_m b_l
    divw = diva @ bval + np.einsum("jk,kj->", a, bjac)
    term_mixed1 = 1j * (divw * j.val + w @ grad_v)
    term_mixed2 = 1j * (bval @ (a @ grad_v))
    term_quad = -(bval @ (a @ bval)) * j.val
    return term_principal + term_mixed1 + term_mixed2 + term_quad


def starshaped_check(domain: DomainSpec, a: MatrixField, nsamples: int = 200,
                     rng=None, tol: float = 1e-12):
    """Evaluate a(x) x . nu on the obstacle boundary; pass iff max <= tol."""
    if domain.kind == "none":
        return {"pass": True, "worst_value": None, "worst_point": None,
                "note": "empty obstacle: trivially a-starshaped"}
    pts, nrm = domain.boundary_samples(nsamples, rng=rng)
    worst = -np.inf
    worst_pt = None
    for x, nu in zip(pts, nrm):
        val = float((a(x) @ x) @ nu)
        if val > worst:
            worst, worst_pt = val, x
    return {"pass": worst <= tol, "worst_value": worst,
            "worst_point": None if worst_pt is None else worst_pt.tolist()}
