import numpy as np
import pytest

from helmlab.fields import (CoefficientSet, DomainSpec, EmptyObstacle,
                            MatrixField, PotentialField, VectorField)
from helmlab.solver import (Grid3DSolveSpec, RadialSolveSpec, SolveResult,
                            convergence_study, dissipation_identity,
                            load_solution, manufactured_rhs, save_solution,
                            solve_3d, solve_radial, truncation_indicator)

ONE = lambda r: 1.0
ZERO = lambda r: 0.0


def _radial_manufactured(n=3, lam=2.0, eps=0.5):
    """Even Gaussian-ring profile (v'(0) = 0, so it sits in the natural
    domain of the radial operator) with analytic source."""
    def g(r, s):
        return np.exp(-(r - s) ** 2)

    def v(r):
        return g(r, 2.0) + g(r, -2.0)

    def dv(r):
        return -2.0 * (r - 2.0) * g(r, 2.0) - 2.0 * (r + 2.0) * g(r, -2.0)

    def ddv(r):
        return ((-2.0 + 4.0 * (r - 2.0) ** 2) * g(r, 2.0)
                + (-2.0 + 4.0 * (r + 2.0) ** 2) * g(r, -2.0))

    def f(r):
        lap = ddv(r) + (n - 1) / r * dv(r) if r > 0 else n * ddv(r)
        return lap + (lam + 1j * eps) * v(r)

    return v, f


def test_radial_convergence_second_order():
    lam, eps = 2.0, 0.5
    v, f = _radial_manufactured(lam=lam, eps=eps)
    spec = RadialSolveSpec(3, 0.0, 60.0, 600, ONE, ZERO, lam, eps, f,
                           exact=v)
    out = convergence_study(spec, levels=2)
    assert 1.8 <= out["order"] <= 2.2


def test_radial_exterior_domain_convergence():
    lam, eps = 1.0, 0.5
    def v(r):
        return (1.0 - np.exp(-4.0 * (r - 1.0) ** 2)) * np.exp(-(r - 2.5) ** 2)
    h = 1e-5

    def f(r):
        lap = (v(r + h) - 2 * v(r) + v(r - h)) / h ** 2 + 2.0 / r * \
            (v(r + h) - v(r - h)) / (2 * h)
        return lap + (lam + 1j * eps) * v(r)

    spec = RadialSolveSpec(3, 1.0, 40.0, 800, ONE, ZERO, lam, eps, f,
                           exact=v)
    out = convergence_study(spec, levels=1)
    assert 1.7 <= out["order"] <= 2.3


def test_radial_dissipation_identity_exact():
    _, f = _radial_manufactured()
    spec = RadialSolveSpec(3, 0.0, 80.0, 4000, ONE, ZERO, 2.0, 0.5, f)
    res = solve_radial(spec)
    lhs, rhs, mismatch = dissipation_identity(res)
    assert mismatch < 1e-10


def test_radial_zero_source_zero_solution():
    spec = RadialSolveSpec(3, 0.0, 40.0, 500, ONE, ZERO, 1.0, 0.5,
                           lambda r: 0.0)
    res = solve_radial(spec)
    assert np.max(np.abs(res.v)) == 0.0


def test_radial_linearity():
    _, f = _radial_manufactured()
    spec1 = RadialSolveSpec(3, 0.0, 40.0, 500, ONE, ZERO, 1.0, 0.5, f)
    spec2 = RadialSolveSpec(3, 0.0, 40.0, 500, ONE, ZERO, 1.0, 0.5,
                            lambda r: 3.0 * f(r))
    v1 = solve_radial(spec1).v
    v2 = solve_radial(spec2).v
    assert np.max(np.abs(v2 - 3.0 * v1)) < 1e-10 * np.max(np.abs(v2))


def test_radial_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        RadialSolveSpec(3, 0.0, 40.0, 500, ONE, ZERO, 1.0, 0.0,
                        lambda r: 0.0)


def test_truncation_indicator_monotone():
    assert truncation_indicator(1.0, 0.5, 200.0) > \
        truncation_indicator(1.0, 0.5, 100.0)
    assert truncation_indicator(100.0, 0.5, 100.0) < \
        truncation_indicator(0.0, 0.5, 100.0)


def _free_coeffs():
    return CoefficientSet(MatrixField.identity(3), VectorField.zero(3),
                          PotentialField.zero(3), 0.5, 3)


def test_3d_solver_matches_gaussian():
    lam, eps = -1.0, 1.0
    co = _free_coeffs()

    def exact(X):
        X = np.atleast_2d(X)
        return np.exp(-np.sum(X * X, axis=1))

    def f(X):
        X = np.atleast_2d(X)
        r2 = np.sum(X * X, axis=1)
        return (4.0 * r2 - 6.0 + lam + 1j * eps) * np.exp(-r2)

    spec = Grid3DSolveSpec(4.0, 0.5, co, DomainSpec.whole_space(3),
                           lam, eps, f, rtol=1e-9, exact=exact)
    out = convergence_study(spec, levels=1)
    assert out["errors"][1] < 0.05
    assert 1.7 <= out["order"] <= 2.3


def test_3d_dissipation_identity():
    lam, eps = 1.0, 0.5
    co = _free_coeffs()

    def f(X):
        X = np.atleast_2d(X)
        return np.exp(-np.sum(X * X, axis=1)) + 0.0j

    spec = Grid3DSolveSpec(4.0, 0.5, co, DomainSpec.whole_space(3),
                           lam, eps, f, rtol=1e-10)
    res = solve_3d(spec)
    lhs, rhs, mismatch = dissipation_identity(res)
    assert mismatch < 1e-6


def test_save_load_round_trip(tmp_path):
    _, f = _radial_manufactured()
    spec = RadialSolveSpec(3, 0.0, 40.0, 500, ONE, ZERO, 1.0, 0.5, f)
    res = solve_radial(spec)
    path = str(tmp_path / "sol.hls")
    save_solution(path, res)
    header, v = load_solution(path)
    assert header["kind"] == "radial"
    assert np.array_equal(v, res.v)


def test_save_rejects_corrupt_file(tmp_path):
    path = tmp_path / "bad.hls"
    path.write_bytes(b"not a solution")
    with pytest.raises(ValueError):
        load_solution(str(path))
