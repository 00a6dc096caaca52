"""Forward-mode derivative bookkeeping for point evaluations.

A ``Jet`` carries the value of a scalar quantity at a point together with
its gradient and (optionally) its Hessian.  Arithmetic propagates the
derivatives by the chain rule, so a complicated expression built from
analytic fields yields exact first (and second) derivatives without any
symbolic machinery.  Quantities with a Hessian can be combined with
first-order-only quantities; the result then degrades to first order.
"""
from __future__ import annotations

import numpy as np

__all__ = ["Jet", "jet_const", "jet_coords"]


class Jet:
    """Scalar value with gradient and optional Hessian at a point.

    val : complex scalar
    grad: (n,) array, d(val)/dx_k
    hess: (n, n) array or None, d2(val)/dx_j dx_k
    """

    __slots__ = ("val", "grad", "hess")

    def __init__(self, val, grad, hess=None):
        self.val = complex(val)
        self.grad = np.asarray(grad, dtype=complex)
        self.hess = None if hess is None else np.asarray(hess, dtype=complex)

    # -- helpers -------------------------------------------------------
    @property
    def n(self):
        return self.grad.shape[0]

    def _hess_with(self, other):
        if self.hess is None or other.hess is None:
            return None
        return "ok"

    def drop_hess(self):
        return Jet(self.val, self.grad, None)

    def conj(self):
        h = None if self.hess is None else self.hess.conj()
        return Jet(np.conj(self.val), self.grad.conj(), h)

    @property
    def real(self):
        h = None if self.hess is None else self.hess.real
        return Jet(self.val.real, self.grad.real, h)

    @property
    def imag(self):
        h = None if self.hess is None else self.hess.imag
        return Jet(self.val.imag, self.grad.imag, h)

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.val + other, self.grad, self.hess)
        h = None
        if self.hess is not None and other.hess is not None:
            h = self.hess + other.hess
        return Jet(self.val + other.val, self.grad + other.grad, h)

    __radd__ = __add__

    def __neg__(self):
        h = None if self.hess is None else -self.hess
        return Jet(-self.val, -self.grad, h)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -complex(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            c = complex(other)
            h = None if self.hess is None else c * self.hess
            return Jet(c * self.val, c * self.grad, h)
        h = None
        if self.hess is not None and other.hess is not None:
            og = np.outer(self.grad, other.grad)
            h = self.hess * other.val + other.hess * self.val + og + og.T
        return Jet(self.val * other.val,
                   self.grad * other.val + other.grad * self.val, h)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / complex(other))
        return self * other._reciprocal()

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def _reciprocal(self):
        iv = 1.0 / self.val
        g = -self.grad * iv * iv
        h = None
        if self.hess is not None:
            og = np.outer(self.grad, self.grad)
            h = (2.0 * og * iv - self.hess) * iv * iv
        return Jet(iv, g, h)

    def sqrt(self):
        s = np.sqrt(self.val)
        g = self.grad / (2.0 * s)
        h = None
        if self.hess is not None:
            og = np.outer(self.grad, self.grad)
            h = self.hess / (2.0 * s) - og / (4.0 * s * self.val)
        return Jet(s, g, h)

    def __repr__(self):
        order = 1 if self.hess is None else 2
        return f"Jet(val={self.val:.6g}, order={order})"


def jet_const(c, n, order=2):
    """Constant scalar as a jet in dimension n."""
    h = None if order < 2 else np.zeros((n, n))
    return Jet(c, np.zeros(n), h)


def jet_coords(x, order=2):
    """Coordinate functions x_0..x_{n-1} at the point x, as jets."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    out = []
    for i in range(n):
        g = np.zeros(n)
        g[i] = 1.0
        h = None if order < 2 else np.zeros((n, n))
        out.append(Jet(x[i], g, h))
    return out
