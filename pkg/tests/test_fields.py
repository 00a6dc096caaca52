import numpy as np
import pytest

from helmlab.fields import (CoefficientSet, DomainSpec, MatrixField,
                            PotentialField, TestFunction, VectorField,
                            apply_Ab, covariant_grad, fd_gradient,
                            starshaped_check)
from helmlab.presets import get_preset, random_coefficients


def test_identity_matrix_field_derivatives_vanish():
    a = MatrixField.identity(3)
    x = np.array([0.7, -1.2, 0.4])
    A, d1, d2, d3 = a.value_d3(x, order=3)
    assert np.allclose(A, np.eye(3))
    assert np.allclose(d1, 0.0) and np.allclose(d2, 0.0)
    assert np.allclose(d3, 0.0)
    assert a.deriv_budget(x) == 0.0


def test_isotropic_radial_matches_finite_differences():
    def alpha_derivs(r):
        u = 1.0 + r * r
        return 1.0 + u ** -0.5, -r * u ** -1.5, \
            -u ** -1.5 + 3 * r * r * u ** -2.5, \
            9 * r * u ** -2.5 - 15 * r ** 3 * u ** -3.5
    a = MatrixField.isotropic_radial(3, alpha_derivs)
    x = np.array([0.9, 0.3, -0.5])
    A, d1, _, _ = a.value_d3(x, order=1)
    h = 1e-6
    for m in range(3):
        xp = x.copy(); xp[m] += h
        xm = x.copy(); xm[m] -= h
        fd = (a(xp) - a(xm)) / (2 * h)
        assert np.max(np.abs(d1[..., m] - fd)) < 1e-6


def test_vector_field_db_antisymmetric():
    p = get_preset("magnetic-small")
    x = np.array([0.4, -0.6, 0.8])
    db = p.coeffs.b.db(x)
    assert np.allclose(db, -db.T)
    assert not p.coeffs.b.is_zero()
    assert VectorField.zero(3).is_zero()


def test_test_function_gradient_consistency():
    rng = np.random.default_rng(3)
    v = TestFunction.random(3, rng)
    X = rng.normal(size=(5, 3))
    G = v.grad_many(X)
    for i, x in enumerate(X):
        fd = fd_gradient(lambda y: complex(v(y)), x)
        assert np.max(np.abs(G[i] - fd)) < 1e-8


def test_test_function_tjet_matches_values():
    rng = np.random.default_rng(4)
    v = TestFunction.random(3, rng)
    x = np.array([0.5, 1.1, -0.2])
    j = v.tjet(x)
    assert abs(j.val - v(x)) < 1e-12
    assert np.max(np.abs(j.g - v.grad_many(x[None, :])[0])) < 1e-12


def test_ball_domain_mask_and_normals():
    dom = DomainSpec.ball(3, 1.0)
    assert not dom.contains(np.array([0.5, 0.0, 0.0]))
    assert dom.contains(np.array([2.0, 0.0, 0.0]))
    pts, nrm = dom.boundary_samples(50, rng=np.random.default_rng(0))
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)
    # exterior-domain normal points into the obstacle
    assert np.allclose(nrm, -pts)


def test_apply_Ab_free_laplacian():
    rng = np.random.default_rng(5)
    co = CoefficientSet(MatrixField.identity(3), VectorField.zero(3),
                        PotentialField.zero(3), 0.5, 3)
    v = TestFunction.gaussian(3, sigma=1.3)
    x = np.array([0.6, -0.4, 0.2])
    got = apply_Ab(v, co, x)
    h = 1e-4
    lap = 0.0 + 0.0j
    for m in range(3):
        xp = x.copy(); xp[m] += h
        xm = x.copy(); xm[m] -= h
        lap += (complex(v(xp)) - 2 * complex(v(x)) + complex(v(xm))) / h ** 2
    assert abs(got - lap) < 1e-5


def test_covariant_grad_adds_magnetic_phase():
    rng = np.random.default_rng(6)
    co = random_coefficients(rng)
    v = TestFunction.random(3, rng)
    x = np.array([0.8, 0.1, -0.3])
    g = covariant_grad(v, co.b, x)
    j = v.tjet(x)
    assert np.allclose(g, j.g + 1j * co.b(x) * j.val)


def test_starshaped_check_ball_identity():
    dom = DomainSpec.ball(3, 1.0)
    out = starshaped_check(dom, MatrixField.identity(3), rng=0)
    assert out["pass"]
    assert out["worst_value"] <= 0.0


def test_random_coefficients_positive_definite():
    rng = np.random.default_rng(7)
    co = random_coefficients(rng)
    for _ in range(20):
        x = rng.normal(scale=2.0, size=3)
        w = np.linalg.eigvalsh(co.a(x))
        assert w.min() > 0.5
