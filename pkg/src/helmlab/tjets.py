"""Third-order pointwise jets: value, gradient, Hessian, third-derivative tensor.

Used to give analytic test functions and coefficient fields exact
derivatives up to order three.  Only the handful of operations needed by
the field catalog are provided (+, *, exp, radial composition).
"""
from __future__ import annotations

import numpy as np

__all__ = ["TJet", "tjet_const", "tjet_coords", "tjet_exp", "compose_radial"]


def _sym_hg(h, g):
    """Symmetrized outer product hess (x) grad -> 3-tensor."""
    t = np.einsum("ij,k->ijk", h, g)
    return t + np.transpose(t, (0, 2, 1)) + np.transpose(t, (2, 0, 1))


class TJet:
    __slots__ = ("val", "g", "h", "t")

    def __init__(self, val, g, h, t):
        self.val = complex(val)
        self.g = np.asarray(g, dtype=complex)
        self.h = np.asarray(h, dtype=complex)
        self.t = np.asarray(t, dtype=complex)

    @property
    def n(self):
        return self.g.shape[0]

    def __add__(self, other):
        if not isinstance(other, TJet):
            return TJet(self.val + other, self.g, self.h, self.t)
        return TJet(self.val + other.val, self.g + other.g,
                    self.h + other.h, self.t + other.t)

    __radd__ = __add__

    def __neg__(self):
        return TJet(-self.val, -self.g, -self.h, -self.t)

    def __sub__(self, other):
        if isinstance(other, TJet):
            return self + (-other)
        return self + (-complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, TJet):
            c = complex(other)
            return TJet(c * self.val, c * self.g, c * self.h, c * self.t)
        f, g = self, other
        val = f.val * g.val
        gr = f.g * g.val + g.g * f.val
        og = np.outer(f.g, g.g)
        h = f.h * g.val + g.h * f.val + og + og.T
        t = (f.t * g.val + g.t * f.val
             + _sym_hg(f.h, g.g) + _sym_hg(g.h, f.g))
        return TJet(val, gr, h, t)

    __rmul__ = __mul__


def tjet_const(c, n):
    return TJet(c, np.zeros(n), np.zeros((n, n)), np.zeros((n, n, n)))


def tjet_coords(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    out = []
    for i in range(n):
        g = np.zeros(n)
        g[i] = 1.0
        out.append(TJet(x[i], g, np.zeros((n, n)), np.zeros((n, n, n))))
    return out


def tjet_exp(f: TJet) -> TJet:
    e = np.exp(f.val)
    g = e * f.g
    ogg = np.outer(f.g, f.g)
    h = e * (f.h + ogg)
    ggg = np.einsum("i,j,k->ijk", f.g, f.g, f.g)
    t = e * (f.t + _sym_hg(f.h, f.g) + ggg)
    return TJet(e, g, h, t)


def compose_radial(derivs, x):
    """TJet of a radial function u(x) = f(|x|).

    derivs: (f, f', f'', f''') evaluated at r = |x|, scalars.
    Requires |x| > 0.
    """
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if r <= 0.0:
        raise ValueError("radial composition undefined at the origin")
    f0, f1, f2, f3 = (complex(d) for d in derivs)
    xh = x / r
    n = x.shape[0]
    eye = np.eye(n)
    P = eye - np.outer(xh, xh)
    r_g = xh
    r_h = P / r
    # third derivative of r: (-d_ij xh_k - d_ik xh_j - d_jk xh_i + 3 xh^3)/r^2
    dxh = _sym_hg(eye, xh)
    xxx = np.einsum("i,j,k->ijk", xh, xh, xh)
    r_t = (-dxh + 3.0 * xxx) / r ** 2
    g = f1 * r_g
    h = f2 * np.outer(r_g, r_g) + f1 * r_h
    t = (f3 * np.einsum("i,j,k->ijk", r_g, r_g, r_g)
         + f2 * _sym_hg(r_h, r_g)
         + f1 * r_t)
    return TJet(f0, g, h, t)
