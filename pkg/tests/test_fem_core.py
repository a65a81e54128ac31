from math import factorial

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from erflow.fem_core.assembly import (assemble_divergence, assemble_mass, assemble_scalar_load,
                                      assemble_scalar_stiffness, assemble_vector_laplacian, invariant_I, norm_X,
                                      shear_rate, strain_rate)
from erflow.fem_core.infsup import estimate_discrete_infsup
from erflow.fem_core.linalg import solve_linear, solve_with_dirichlet
from erflow.fem_core.quadrature import LINEAR_RULE, NONLINEAR_RULE, triangle_rule
from erflow.fem_core.space import FeSpace, reference_basis
from erflow.mesh import DIRICHLET, Mesh2D, TagKind, build_rectangle_mesh


def single_triangle():
    edges = (((0, 1), DIRICHLET), ((1, 2), DIRICHLET), ((2, 0), DIRICHLET))
    return Mesh2D(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), edges)


@pytest.mark.parametrize("degree", [LINEAR_RULE, NONLINEAR_RULE])
def test_quadrature_exact_on_monomials(degree):
    rule = triangle_rule(degree)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            got = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
            assert abs(got - exact) < 1e-14


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.sampled_from([1, 2]))
def test_basis_partition_of_unity(s, t, degree):
    if s + t > 1:
        s, t = 1 - s, 1 - t
    phi, dphi = reference_basis(degree, np.array([[s, t]]))
    assert abs(phi.sum() - 1.0) < 1e-13
    assert np.max(np.abs(dphi.sum(axis=1))) < 1e-12


def test_stiffness_single_triangle():
    K = assemble_scalar_stiffness(FeSpace(single_triangle(), 1, 1, constrained=())).toarray()
    assert np.allclose(K, [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-14)


def test_stiffness_rows_and_linearity():
    V = FeSpace(build_rectangle_mesh(1, 1, 3, 3), 1, 1, constrained=())
    K1 = assemble_scalar_stiffness(V)
    K2 = assemble_scalar_stiffness(V, 2.0)
    assert np.max(np.abs(K1 @ np.ones(V.ndof))) < 1e-13
    assert abs(K2 - 2 * K1).max() < 1e-14


def test_divergence_of_divergence_free_fields():
    m = build_rectangle_mesh(1, 1, 3, 3)
    V, P = FeSpace(m, 2, 2, constrained=()), FeSpace(m, 1, 1, constrained=())
    B = assemble_divergence(V, P)
    assert np.max(np.abs(B @ V.interpolate(lambda x, y: (x, -y)))) < 1e-12
    assert np.max(np.abs(B @ V.interpolate(lambda x, y: (1 + 0 * x, 0 * y)))) < 1e-13


def test_divergence_of_x_equals_mass_row_sums():
    m = build_rectangle_mesh(1, 1, 2, 2)
    V, P = FeSpace(m, 2, 2, constrained=()), FeSpace(m, 1, 1, constrained=())
    Bu = assemble_divergence(V, P) @ V.interpolate(lambda x, y: (x, 0 * y))
    rows = np.asarray(assemble_mass(P).sum(axis=1)).ravel()
    assert np.allclose(Bu, rows, atol=1e-14)


def test_vector_laplacian_blocks():
    V = FeSpace(build_rectangle_mesh(1, 1, 2, 2), 2, 2, constrained=())
    S = FeSpace(V.mesh, 2, 1, constrained=())
    A = assemble_vector_laplacian(V).tocsr()
    K = assemble_scalar_stiffness(S)
    n = S.ndof
    assert abs(A[:n, :n] - K).max() < 1e-14
    assert abs(A[n:, n:] - K).max() < 1e-14
    assert abs(A[:n, n:]).max() == 0 and abs(A[n:, :n]).max() == 0


def test_vector_laplacian_coercive():
    V = FeSpace(build_rectangle_mesh(1, 1, 2, 2), 2, 2, constrained=())
    A = assemble_vector_laplacian(V, lambda x, y: 1 + x * y)
    A1 = assemble_vector_laplacian(V)
    rng = np.random.default_rng(0)
    for _ in range(100):
        u = rng.standard_normal(V.ndof)
        assert u @ (A @ u) >= (u @ (A1 @ u)) * (1 - 1e-12)


@pytest.mark.parametrize("u,eps,I", [
    ((lambda x, y: (y, 0 * x)), [[0, 0.5], [0.5, 0]], 0.5),
    ((lambda x, y: (-y, x)), [[0, 0], [0, 0]], 0.0),
    ((lambda x, y: (x, -y)), [[1, 0], [0, -1]], 2.0),
])
def test_strain_and_invariant(u, eps, I):
    V = FeSpace(single_triangle(), 2, 2, constrained=())
    _, g = V.eval_points(V.interpolate(u), np.array([[0.2, 0.3]]))
    e = strain_rate(g)[0]
    assert np.allclose(e, eps, atol=1e-14)
    assert abs(invariant_I(e) - I) < 1e-14
    assert abs(shear_rate(invariant_I(e)) - np.sqrt(I / 2)) < 1e-14


def test_norm_X():
    V = FeSpace(build_rectangle_mesh(1, 1, 2, 2), 2, 2, constrained=())
    assert norm_X(V, np.zeros(V.ndof)) == 0.0
    assert abs(norm_X(V, V.interpolate(lambda x, y: (y, 0 * x))) - np.sqrt(0.5)) < 1e-13
    u = np.random.default_rng(1).standard_normal(V.ndof)
    assert abs(norm_X(V, 2 * u) - 2 * norm_X(V, u)) < 1e-12 * norm_X(V, u)


def test_solve_linear_small():
    b = np.array([3.0, -1.0, 2.0])
    assert np.allclose(solve_linear(sp.identity(3), b), b)
    A = sp.csr_matrix(np.diag([2.0, 4.0]))
    assert np.allclose(solve_linear(A, np.array([2.0, 4.0])), [1, 1])
    assert np.allclose(solve_linear(A, np.array([2.0, 4.0]), method="cg"), [1, 1])


def test_poisson_manufactured_converges():
    exact = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    f = lambda x, y: 2 * np.pi ** 2 * exact(x, y)
    errs = []
    for n in (4, 8):
        V = FeSpace(build_rectangle_mesh(1, 1, n, n), 2, 1, constrained=())
        K = assemble_scalar_stiffness(V)
        b = assemble_scalar_load(V, f)
        fixed = V.scalar_dofs_on(TagKind.DIRICHLET)
        u = solve_with_dirichlet(K, b, fixed, np.zeros(len(fixed)))
        errs.append(np.max(np.abs(u - exact(*V.dof_coords.T))))
    assert errs[1] < errs[0] / 6


def test_infsup_single_element_finite():
    m = single_triangle()
    r = estimate_discrete_infsup(FeSpace(m, 2, 2, constrained=()), FeSpace(m, 1, 1, constrained=()))
    assert np.isfinite(r.beta) and r.beta >= 0


def test_infsup_taylor_hood_vs_equal_order():
    m = build_rectangle_mesh(1, 1, 4, 4)
    P = FeSpace(m, 1, 1, constrained=())
    th = estimate_discrete_infsup(FeSpace(m, 2, 2), P)
    p1 = estimate_discrete_infsup(FeSpace(m, 1, 2), P)
    assert th.beta > 0.1
    assert th.spurious_modes == 0
    assert p1.spurious_modes > 0 or p1.beta < th.beta / 2
