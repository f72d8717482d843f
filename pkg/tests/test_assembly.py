import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st

from thinobs.assembly import (
    AssemblyError,
    EllipticCoefficients,
    EllipticityError,
    ProblemSpec,
    assemble_lcp,
    assemble_operator,
    constant_coefficients,
    identity_coefficients,
    is_m_matrix,
    normalize_problem,
    reduce_source,
    sine_perturbed_coefficients,
    tangential_gradient,
)
from thinobs.grid import build_grid, flat_manifold, parabolic_manifold


def zero(x):
    return np.zeros(np.shape(x)[:-1])


def spec_for(grid, coef, manifold=None, obstacle=zero, dirichlet=zero, source=None):
    return ProblemSpec(grid, coef, manifold or flat_manifold(), obstacle, dirichlet, source)


def interior_rows(grid, A, u):
    inner = ~grid.boundary_mask()
    return (A @ u)[inner]


def test_laplacian_annihilates_harmonic_quadratic():
    g = build_grid(2, 1.0, 17)
    A = assemble_operator(spec_for(g, identity_coefficients(2)))
    x = g.points()
    assert np.max(np.abs(interior_rows(g, A, x[:, 0] ** 2 - x[:, 1] ** 2))) < 1e-10
    assert np.allclose(interior_rows(g, A, x[:, 0] ** 2), -2.0)


@pytest.mark.parametrize("a12", [0.3, -0.3])
def test_mixed_term_consistency(a12):
    g = build_grid(2, 1.0, 17)
    a = np.array([[1.0, a12], [a12, 1.2]])
    A = assemble_operator(spec_for(g, constant_coefficients(a)))
    x = g.points()
    # -div(a grad(x1 x2)) = -2 a12
    assert np.allclose(interior_rows(g, A, x[:, 0] * x[:, 1]), -2 * a12)
    assert np.allclose(interior_rows(g, A, x[:, 1] ** 2), -2 * a[1, 1])
    assert is_m_matrix(A)


def _consistency_ratios(coef, ms=(33, 65, 129)):
    u = lambda p: np.sin(p[..., 0]) * np.cos(p[..., 1])

    def grad(p):
        return np.stack([np.cos(p[:, 0]) * np.cos(p[:, 1]), -np.sin(p[:, 0]) * np.sin(p[:, 1])], axis=1)

    def exact(p):
        step = 1e-4
        out = np.zeros(p.shape[0])
        for i in range(2):
            e = np.zeros(2)
            e[i] = step
            flux = lambda q: np.einsum("kij,kj->ki", coef(q), grad(q))[:, i]
            out -= (flux(p + e) - flux(p - e)) / (2 * step)
        return out

    errs = []
    for m in ms:
        g = build_grid(2, 1.0, m)
        A = assemble_operator(spec_for(g, coef))
        inner = ~g.boundary_mask()
        errs.append(np.max(np.abs((A @ u(g.points()))[inner] - exact(g.points()[inner]))))
    return np.array(errs[:-1]) / np.array(errs[1:])


def test_diagonal_coefficients_second_order():
    assert np.all(_consistency_ratios(sine_perturbed_coefficients(2, 0.1)) > 3.8)


def test_constant_mixed_coefficients_second_order():
    assert np.all(_consistency_ratios(constant_coefficients([[1.0, 0.3], [0.3, 1.2]])) > 3.8)


def test_sign_changing_mixed_coefficient_first_order():
    # the stencil switches diagonal where a_12 changes sign
    assert np.all(_consistency_ratios(sine_perturbed_coefficients(2, 0.1, mixed=0.05)) > 1.9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 0.2), st.floats(-0.2, 0.2), st.integers(2, 3))
def test_operator_symmetric_m_matrix(eps, mixed, n):
    g = build_grid(n, 1.0, 7)
    A = assemble_operator(spec_for(g, sine_perturbed_coefficients(n, eps, mixed)))
    assert abs(A - A.T).max() < 1e-12
    sys = assemble_lcp(spec_for(g, sine_perturbed_coefficients(n, eps, mixed)))
    assert is_m_matrix(sys.A)
    assert sys.m_matrix


def test_ellipticity_violation_detected():
    bad = EllipticCoefficients(lambda x: np.broadcast_to(np.diag([1.0, 0.1]), x.shape[:-1] + (2, 2)), lam=0.5, Lam=2.0)
    with pytest.raises(EllipticityError):
        assemble_operator(spec_for(build_grid(2, 1.0, 5), bad))
    asym = EllipticCoefficients(lambda x: np.broadcast_to(np.array([[1.0, 0.1], [0.0, 1.0]]), x.shape[:-1] + (2, 2)))
    with pytest.raises(EllipticityError):
        assemble_operator(spec_for(build_grid(2, 1.0, 5), asym))


def test_lcp_layout_and_dirichlet_elimination():
    g = build_grid(2, 1.0, 9)
    data = lambda x: 1.0 + x[..., 0]
    sys = assemble_lcp(spec_for(g, identity_coefficients(2), dirichlet=data))
    assert sys.size == 49
    # boundary constrained nodes are dropped: 7 of 9 on the x2 = 0 line
    assert sys.constrained.size == 7
    # linear data is discrete-harmonic: the unconstrained solve reproduces it
    u = spla.spsolve(sys.A.tocsc(), sys.b)
    assert np.allclose(sys.to_field(u).values, data(g.points()))


def test_reduce_source_solves_unconstrained_problem():
    g = build_grid(2, 1.0, 17)
    spec = spec_for(g, identity_coefficients(2), source=lambda x: np.ones(x.shape[:-1]))
    w, reduced = reduce_source(spec)
    assert reduced.source is None
    sys = assemble_lcp(spec)
    # w solves the full system with zero obstacle constraint ignored
    assert np.allclose(sys.A @ sys.from_field(w), sys.b)
    # and the reduced problem has zero right-hand side
    assert np.allclose(assemble_lcp(reduced).b, 0.0)
    zero_w, same = reduce_source(spec_for(g, identity_coefficients(2)))
    assert not np.any(zero_w.values) and same.shift is None


def test_normalize_removes_affine_obstacle():
    g = build_grid(2, 1.0, 17)
    phi = lambda f: 0.5 + 0.3 * f[..., 0]
    spec = normalize_problem(spec_for(g, identity_coefficients(2), parabolic_manifold(0.2), obstacle=phi))
    assert float(spec.obstacle(np.zeros((1, 2)))[0]) == pytest.approx(0.0, abs=1e-14)
    assert tangential_gradient(spec)[0] == pytest.approx(0.0, abs=1e-8)
    # a = I: the affine part is harmonic so no source appears
    assert spec.source is None


def test_normalize_variable_coefficients_adds_source():
    g = build_grid(2, 1.0, 17)
    coef = sine_perturbed_coefficients(2, 0.1)
    spec = normalize_problem(spec_for(g, coef, obstacle=lambda f: 0.3 * f[..., 0]))
    x = g.points()
    # div(a grad l) with l = 0.3 x1 is 0.3 d/dx1 a_11 = 0.03 cos(x1) sin(x2); the source absorbs its negative
    assert np.allclose(spec.source(x), -0.03 * np.cos(x[:, 0]) * np.sin(x[:, 1]), atol=1e-8)


def test_normalize_coordinates_to_identity():
    g = build_grid(2, 1.0, 17)
    a0 = np.array([[2.0, 0.5], [0.5, 1.0]])
    spec = normalize_problem(spec_for(g, constant_coefficients(a0)))
    assert np.allclose(spec.coefficients.at_origin(2), np.eye(2), atol=1e-12)
    # the flat manifold stays a graph over y' with g(0) = 0, grad g(0) = 0
    spec.manifold.check_normalized(2, tol=1e-10)


def test_normalize_rejects_shifted_problem():
    g = build_grid(2, 1.0, 9)
    spec = spec_for(g, constant_coefficients(np.diag([2.0, 1.0])))
    spec = spec.__class__(**{**spec.__dict__, "shift": np.zeros(g.size)})
    with pytest.raises(AssemblyError):
        normalize_problem(spec)
