"""Radial multiplier weights.

The main weight is the scaled Morawetz profile: linear slope inside the
ball of radius R, saturating to 1/2 outside, with an explicit piecewise
family of radial derivatives.  Its fourth derivative carries a surface
delta on |x| = R which is kept symbolic (coefficient only) and excluded
from pointwise work.

Also provided: the constant and tent-shaped secondary weights phi.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["OriginPoint", "SurfaceProximity", "Weight", "ConstPhi",
           "TentPhi", "LinearPsi"]


class OriginPoint(Exception):
    """Radial derivatives undefined at x = 0."""


class SurfaceProximity(Exception):
    """Evaluation point too close to the weight's surface radius."""


@dataclass
class Weight:
    """Scaled radial weight with psi' = (n-1)|x|/(2nR) inside |x| <= R
    and 1/2 - R^{n-1}/(2n|x|^{n-1}) outside."""
    R: float
    n: int

    def __post_init__(self):
        if self.R <= 0:
            raise ValueError("scaling radius must be positive")
        if self.n < 2:
            raise ValueError("dimension must be >= 2")

    @property
    def surface_coeff(self):
        """Coefficient of the delta on |x| = R inside the fourth
        derivative (regular parts exclude it)."""
        return -(self.n - 1.0) / (2.0 * self.R ** 2)

    def value(self, r: float) -> float:
        n, R = self.n, self.R
        if r <= 0.0:
            return 0.0
        s = r / R
        if s <= 1.0:
            return R * (n - 1.0) / (4.0 * n) * s * s
        # integral of the outer branch, continuous at s = 1
        inner = (n - 1.0) / (4.0 * n)
        if n == 2:
            tail = math.log(s) / (2.0 * n)
        else:
            tail = (1.0 - s ** (2 - n)) / (2.0 * n * (n - 2.0))
        return R * (inner + 0.5 * (s - 1.0) - tail)

    def derivs(self, r: float):
        """(psi', psi'', psi''', psi4_regular) at radius r > 0."""
        n, R = self.n, self.R
        if r <= 0.0:
            raise OriginPoint("weight derivatives undefined at the origin")
        if r <= R:
            d1 = (n - 1.0) / (2.0 * n) * r / R
            d2 = (n - 1.0) / (2.0 * n * R)
            return d1, d2, 0.0, 0.0
        q = R ** (n - 1)
        d1 = 0.5 - q / (2.0 * n * r ** (n - 1))
        d2 = (n - 1.0) / (2.0 * n) * q / r ** n
        d3 = -(n - 1.0) / 2.0 * q / r ** (n + 1)
        d4 = (n * n - 1.0) / 2.0 * q / r ** (n + 2)
        return d1, d2, d3, d4

    def guard(self, r: float, margin: float = 0.05):
        if abs(r - self.R) < margin * self.R:
            raise SurfaceProximity(
                f"point at radius {r:.6g} is within {margin:.0%} of the "
                f"surface radius {self.R:.6g}")


@dataclass
class ConstPhi:
    """Constant secondary weight (0 or 1 in practice)."""
    c: float = 0.0

    def derivs(self, r: float):
        return 0.0, 0.0, 0.0, 0.0

    def value(self, r: float) -> float:
        return self.c

    def guard(self, r: float, margin: float = 0.05):
        pass


@dataclass
class TentPhi:
    """1 inside |x| <= R, linear down to 0 on R <= |x| <= 2R, then 0.

    The corner radii R and 2R must be avoided by pointwise checks; the
    cutoff at 2R follows the middle branch (the stated outer branch
    starts where the linear part reaches zero).
    """
    R: float

    def value(self, r: float) -> float:
        if r <= self.R:
            return 1.0
        if r <= 2.0 * self.R:
            return 2.0 - r / self.R
        return 0.0

    def derivs(self, r: float):
        if self.R < r < 2.0 * self.R:
            return -1.0 / self.R, 0.0, 0.0, 0.0
        return 0.0, 0.0, 0.0, 0.0

    def guard(self, r: float, margin: float = 0.05):
        for corner in (self.R, 2.0 * self.R):
            if abs(r - corner) < margin * corner:
                raise SurfaceProximity(
                    f"point at radius {r:.6g} is near the tent corner "
                    f"{corner:.6g}")


@dataclass
class LinearPsi:
    """psi(x) = e . x for a constant direction e (degenerate test weight:
    every radial derivative machinery is bypassed)."""
    e: np.ndarray

    def __post_init__(self):
        self.e = np.asarray(self.e, dtype=float)

    def guard(self, r: float, margin: float = 0.05):
        pass
