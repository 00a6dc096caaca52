"""Named coefficient scenarios used throughout the test-bed.

Each preset bundles a CoefficientSet, a domain, and whatever constants
are known in closed form so the measurement routines can be checked
against them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .fields import (CoefficientSet, DomainSpec, MatrixField, PotentialField,
                     VectorField)
from .tjets import tjet_const, tjet_coords, tjet_exp

__all__ = ["Preset", "get_preset", "PRESET_NAMES", "bracket_power_derivs",
           "random_coefficients"]


def bracket_power_derivs(p: float, r: float):
    """f(r) = <r>^p = (1+r^2)^{p/2} with derivatives up to order three."""
    q = p / 2.0
    u = 1.0 + r * r
    f0 = u ** q
    f1 = 2.0 * q * r * u ** (q - 1)
    f2 = 2.0 * q * u ** (q - 1) + 4.0 * q * (q - 1) * r * r * u ** (q - 2)
    f3 = (12.0 * q * (q - 1) * r * u ** (q - 2)
          + 8.0 * q * (q - 1) * (q - 2) * r ** 3 * u ** (q - 3))
    return f0, f1, f2, f3


@dataclass
class Preset:
    name: str
    coeffs: CoefficientSet
    domain: DomainSpec
    nominal: Dict[str, float] = field(default_factory=dict)
    notes: str = ""


def _identity(n: int = 3, delta: float = 0.5) -> Preset:
    coeffs = CoefficientSet(MatrixField.identity(n), VectorField.zero(n),
                            PotentialField.zero(n), delta, n)
    return Preset("identity", coeffs, DomainSpec.whole_space(n),
                  nominal={"N": 1.0, "nu": 1.0, "C_a": 0.0, "C_b": 0.0,
                           "C_minus": 0.0, "C_plus": 0.0, "C_c": 0.0,
                           "C_I": 0.0},
                  notes="free Laplacian, every smallness constant vanishes")


def _near_identity_n3(eta: float = 5e-7, delta: float = 0.9,
                      obstacle: float = 0.0, mu: float = 0.0,
                      cpot: float = 0.0) -> Preset:
    """a = (1 + eta <r>^{-delta}) I in dimension three.

    eta is kept small enough that the measured variation constant clears
    delta/48000 and the perturbation size clears delta/7200.  obstacle,
    when positive, is the radius of a Dirichlet ball (starshaped).  mu
    and cpot switch on Gaussian-localized magnetic and repulsive
    potential perturbations of that amplitude.
    """
    n = 3

    def alpha_derivs(r):
        f0, f1, f2, f3 = bracket_power_derivs(-delta, r)
        return 1.0 + eta * f0, eta * f1, eta * f2, eta * f3

    a = MatrixField.isotropic_radial(n, alpha_derivs)
    if mu > 0.0:
        def comp_tjets(x):
            xc = tjet_coords(x)
            s = tjet_const(0.0, n)
            for i in range(n):
                s = s + xc[i] * xc[i]
            e = tjet_exp(-s)
            return [(-mu) * (xc[1] * e), mu * (xc[0] * e),
                    tjet_const(0.0, n)]
        b = VectorField.from_tjets(n, comp_tjets)

        def b_many(X):
            X = np.asarray(X, dtype=float)
            e = np.exp(-np.sum(X * X, axis=1))
            out = np.zeros_like(X)
            out[:, 0] = -mu * X[:, 1] * e
            out[:, 1] = mu * X[:, 0] * e
            return out

        b.value_many = b_many
    else:
        b = VectorField.zero(n)
    if cpot > 0.0:
        def vg(x):
            x = np.asarray(x, dtype=float)
            val = cpot * np.exp(-float(x @ x))
            return val, -2.0 * val * x     # x . grad c <= 0: repulsive
        c = PotentialField(n, vg)
        c.value_many = lambda X: cpot * np.exp(
            -np.sum(np.asarray(X, float) ** 2, axis=1))
    else:
        c = PotentialField.zero(n)
    coeffs = CoefficientSet(a, b, c, delta, n)
    dom = (DomainSpec.ball(n, obstacle) if obstacle > 0.0
           else DomainSpec.whole_space(n))
    return Preset("near-identity-n3", coeffs, dom,
                  nominal={"N": 1.0 + eta, "nu": 1.0, "C_b": 0.0,
                           "C_minus": 0.0, "C_plus": 0.0, "C_c": 0.0,
                           "C_I": eta, "eta": eta},
                  notes="isotropic decaying perturbation of the identity")


def _diag_n4(delta: float = 0.8, eta: float = 1e-5,
             C: float = 0.25) -> Preset:
    """a = diag(1, 1, 1, alpha(|x|)) in dimension four with a repulsive
    inverse-square potential.

    alpha = 1 + eta <r>^{-delta}.  The anisotropy is kept far below the
    admissible sqrt(13/12) - 1 so the variation constant clears the
    delta/900 budget; attaining the full anisotropy range is not
    compatible with that budget (bounded total variation).
    """
    n = 4

    def one(r):
        return 1.0, 0.0, 0.0, 0.0

    def alpha(r):
        f0, f1, f2, f3 = bracket_power_derivs(-delta, r)
        return 1.0 + eta * f0, eta * f1, eta * f2, eta * f3

    a = MatrixField.diagonal_radial(n, [one, one, one, alpha])

    def mean_derivs(r):
        f0, f1, f2, f3 = alpha(r)
        return ((3.0 + f0) / 4.0, f1 / 4.0, f2 / 4.0, f3 / 4.0)

    # direction-averaged isotropic profile for the radial solve path;
    # it differs from the true operator by at most eta in coefficient
    a.radial_proxy = mean_derivs
    coeffs = CoefficientSet(a, VectorField.zero(n),
                            PotentialField.inverse_square(n, C), delta, n)
    return Preset("diag-n4", coeffs, DomainSpec.whole_space(n),
                  nominal={"N": 1.0 + eta, "nu": 1.0, "C_b": 0.0,
                           "C_minus": 0.0, "C_plus": float(np.sqrt(C)),
                           "eta": eta},
                  notes="four-dimensional diagonal example with a varying "
                        "last entry and a repulsive inverse-square potential")


def _magnetic_small(mu: float = 1e-4, delta: float = 0.5) -> Preset:
    """Gaussian-localized rotation field b = mu (-y, x, 0) e^{-|x|^2}."""
    n = 3

    def comp_tjets(x):
        xc = tjet_coords(x)
        s = tjet_const(0.0, n)
        for i in range(n):
            s = s + xc[i] * xc[i]
        e = tjet_exp(-s)
        return [(-mu) * (xc[1] * e), mu * (xc[0] * e), tjet_const(0.0, n)]

    b = VectorField.from_tjets(n, comp_tjets)

    def b_many(X):
        X = np.asarray(X, dtype=float)
        e = np.exp(-np.sum(X * X, axis=1))
        out = np.zeros_like(X)
        out[:, 0] = -mu * X[:, 1] * e
        out[:, 1] = mu * X[:, 0] * e
        return out

    b.value_many = b_many
    coeffs = CoefficientSet(MatrixField.identity(n), b,
                            PotentialField.zero(n), delta, n)
    return Preset("magnetic-small", coeffs, DomainSpec.whole_space(n),
                  nominal={"N": 1.0, "nu": 1.0, "C_a": 0.0, "C_minus": 0.0,
                           "C_plus": 0.0, "C_c": 0.0, "C_I": 0.0, "mu": mu},
                  notes="small solenoidal magnetic potential with Gaussian "
                        "decay; the trapping component db decays likewise")


def _coulomb_repulsive(C: float = 1.0, delta: float = 0.5) -> Preset:
    """Inverse-square repulsive potential c = C/|x|^2 outside the unit ball.

    x . grad c = -2C/|x|^2 <= 0, so the repulsivity constant vanishes;
    the positive-part size is sqrt(C).
    """
    n = 3
    coeffs = CoefficientSet(MatrixField.identity(n), VectorField.zero(n),
                            PotentialField.inverse_square(n, C), delta, n)
    return Preset("coulomb-repulsive", coeffs, DomainSpec.ball(n, 1.0),
                  nominal={"N": 1.0, "nu": 1.0, "C_a": 0.0, "C_b": 0.0,
                           "C_minus": 0.0, "C_plus": float(np.sqrt(C)),
                           "C_c": 0.0, "C_I": 0.0, "C": C},
                  notes="repulsive inverse-square potential, unit ball "
                        "obstacle (starshaped)")


def random_coefficients(rng, n: int = 3, amp: float = 0.15,
                        mag: float = 0.1, pot: float = 0.3,
                        nbumps: int = 2, delta: float = 0.5):
    """Random smooth coefficient draw for residual batteries.

    a is the identity plus symmetric Gaussian bumps of size amp (kept
    uniformly positive definite since amp * nbumps < 1), b is a Gaussian
    bump vector field of size mag, c a real Gaussian of size pot.  All
    derivatives are exact jets.
    """
    S = [0.5 * (M + M.T) for M in rng.normal(size=(nbumps, n, n))]
    S = [amp * M / max(1.0, np.linalg.norm(M, 2)) / nbumps for M in S]
    ctr = rng.normal(scale=1.5, size=(nbumps, n))
    sig = rng.uniform(0.8, 1.6, size=nbumps)

    def bump_tjets(x):
        xc = tjet_coords(x)
        out = []
        for k in range(nbumps):
            s = tjet_const(0.0, n)
            for i in range(n):
                d = xc[i] + tjet_const(-ctr[k, i], n)
                s = s + d * d
            out.append(tjet_exp((-1.0 / sig[k] ** 2) * s))
        return out

    def a_entries(x):
        g = bump_tjets(x)
        return [[tjet_const(1.0 if j == kk else 0.0, n)
                 + sum((S[q][j, kk] * g[q] for q in range(nbumps)),
                       tjet_const(0.0, n))
                 for kk in range(n)] for j in range(n)]

    a = MatrixField.from_tjet_matrix(n, a_entries)

    bvec = rng.normal(size=(nbumps, n))

    def b_comps(x):
        g = bump_tjets(x)
        return [sum(((mag * bvec[q, i]) * g[q] for q in range(nbumps)),
                    tjet_const(0.0, n)) for i in range(n)]

    b = VectorField.from_tjets(n, b_comps)

    cc = pot * rng.normal()
    c0 = rng.normal(scale=1.5, size=n)
    cs = rng.uniform(0.8, 1.6)

    def vg(x):
        x = np.asarray(x, dtype=float)
        d = x - c0
        val = cc * np.exp(-float(d @ d) / cs ** 2)
        return val, -2.0 * val * d / cs ** 2

    c = PotentialField(n, vg)
    return CoefficientSet(a, b, c, delta, n)


def _anisotropic_trapped(ratio: float = 1.5, delta: float = 0.5) -> Preset:
    """Constant diagonal a with eigenvalue ratio beyond the admissible
    range in dimension three; certification must report the failure."""
    n = 3
    a = MatrixField.constant(np.diag([1.0, 1.0, ratio]))
    coeffs = CoefficientSet(a, VectorField.zero(n), PotentialField.zero(n),
                            delta, n)
    return Preset("anisotropic-trapped", coeffs, DomainSpec.whole_space(n),
                  nominal={"N": ratio, "nu": 1.0},
                  notes="eigenvalue ratio exceeds (3n-1)/(n+3); the "
                        "multiplier scheme has no positive margin")


_BUILDERS = {
    "identity": _identity,
    "near-identity-n3": _near_identity_n3,
    "diag-n4": _diag_n4,
    "magnetic-small": _magnetic_small,
    "coulomb-repulsive": _coulomb_repulsive,
    "anisotropic-trapped": _anisotropic_trapped,
}

PRESET_NAMES = tuple(_BUILDERS)


def get_preset(name: str, **kwargs) -> Preset:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
    return builder(**kwargs)
