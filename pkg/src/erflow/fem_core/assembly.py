"""Assembly of the bilinear and linear forms used by every solver."""

from __future__ import annotations

from typing import Callable, Union

import numpy as np
import scipy.sparse as sp

from .. import kernels
from ..mesh import TagKind
from .quadrature import LINEAR_RULE
from .space import FeSpace, Tabulation

SQRT2 = np.sqrt(2.0)

Coefficient = Union[float, np.ndarray, Callable]


class InvalidCoefficient(ValueError):
    """A coefficient violates its positivity bound at a quadrature point."""


def coefficient_at(coef: Coefficient, tab: Tabulation) -> np.ndarray:
    """Evaluate a scalar, callable f(x, y) or (T, Q) array at quadrature points."""
    T, Q = tab.wdet.shape
    if callable(coef):
        x = tab.points
        vals = np.asarray(coef(x[..., 0], x[..., 1]), dtype=float)
    else:
        vals = np.asarray(coef, dtype=float)
    return np.broadcast_to(vals, (T, Q)).astype(float)


def _positive(values: np.ndarray, name: str) -> None:
    if np.any(~(values > 0.0)):
        t, q = np.unravel_index(int(np.argmin(np.where(np.isfinite(values), values, -np.inf))), values.shape)
        raise InvalidCoefficient(f"{name} = {values[t, q]!r} <= 0 at element {t}, quadrature point {q}")


def scatter_matrix(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    """Sum element matrices (T, n1, n2) into a CSR matrix; order-deterministic."""
    T, n1, n2 = local.shape
    r = np.broadcast_to(rows[:, :, None], (T, n1, n2)).ravel()
    c = np.broadcast_to(cols[:, None, :], (T, n1, n2)).ravel()
    A = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    A.sum_duplicates()
    return A


def scatter_vector(local: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(rows.ravel(), weights=local.ravel(), minlength=n)


# -- strain and divergence representations ----------------------------------

def strain_matrix(tab: Tabulation) -> np.ndarray:
    """(T, Q, 3, 2n) map from local vector dofs to (e11, e22, sqrt2*e12).

    With this scaling the Euclidean product of two rows equals eps(u):eps(h).
    """
    g = tab.grads
    T, Q, n, _ = g.shape
    B = np.zeros((T, Q, 3, 2 * n))
    B[:, :, 0, :n] = g[..., 0]
    B[:, :, 2, :n] = g[..., 1] / SQRT2
    B[:, :, 1, n:] = g[..., 1]
    B[:, :, 2, n:] = g[..., 0] / SQRT2
    return B


def strain_vector(grad: np.ndarray) -> np.ndarray:
    """Scaled strain (…, 3) from velocity gradient (…, 2, 2) with grad[i, j] = du_i/dx_j."""
    e12 = 0.5 * (grad[..., 0, 1] + grad[..., 1, 0])
    return np.stack([grad[..., 0, 0], grad[..., 1, 1], SQRT2 * e12], axis=-1)


def strain_rate(grad: np.ndarray) -> np.ndarray:
    """Symmetric part of the velocity gradient."""
    grad = np.asarray(grad, dtype=float)
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def invariant_I(eps: np.ndarray) -> np.ndarray:
    """Sum of squared strain-rate components."""
    return np.sum(np.asarray(eps) ** 2, axis=(-2, -1))


def shear_rate(I: np.ndarray) -> np.ndarray:
    return np.sqrt(0.5 * np.asarray(I))


def divergence_row(tab: Tabulation) -> np.ndarray:
    """(T, Q, 2n): divergence of each local vector basis function."""
    g = tab.grads
    return np.concatenate([g[..., 0], g[..., 1]], axis=2)


def vector_values(tab: Tabulation, n_elem: int) -> np.ndarray:
    """(T, Q, 2, 2n) values of local vector basis functions."""
    phi = tab.phi
    Q, n = phi.shape
    N = np.zeros((Q, 2, 2 * n))
    N[:, 0, :n] = phi
    N[:, 1, n:] = phi
    return np.broadcast_to(N, (n_elem, Q, 2, 2 * n))


# -- matrices ---------------------------------------------------------------

def assemble_scalar_stiffness(space: FeSpace, coefficient: Coefficient = 1.0,
                              rule: int = LINEAR_RULE, check: bool = True) -> sp.csr_matrix:
    """Matrix of a(v, h) = integral of coef * grad v . grad h."""
    if space.components != 1:
        raise ValueError("scalar space required")
    tab = space.tabulate(rule)
    c = coefficient_at(coefficient, tab)
    if check:
        _positive(c, "stiffness coefficient")
    B = np.swapaxes(tab.grads, 2, 3)  # (T, Q, 2, n)
    D = c[..., None, None] * np.eye(2)
    local = kernels.weighted_gram(B, np.broadcast_to(D, B.shape[:2] + (2, 2)), tab.wdet)
    dm = space.scalar_dofmap
    return scatter_matrix(local, dm, dm, (space.n_scalar, space.n_scalar))


def assemble_mass(space: FeSpace, coefficient: Coefficient = 1.0, rule: int = LINEAR_RULE) -> sp.csr_matrix:
    tab = space.tabulate(rule)
    c = coefficient_at(coefficient, tab)
    T = len(space.mesh.triangles)
    phi = np.broadcast_to(tab.phi, (T,) + tab.phi.shape)
    local = kernels.weighted_outer(phi, phi, tab.wdet * c)
    dm = space.scalar_dofmap
    M = scatter_matrix(local, dm, dm, (space.n_scalar, space.n_scalar))
    if space.components == 1:
        return M
    return sp.block_diag([M] * space.components, format="csr")


def assemble_vector_laplacian(space: FeSpace, coefficient: Coefficient = 1.0,
                              rule: int = LINEAR_RULE) -> sp.csr_matrix:
    """Block-diagonal matrix of integral g * grad u_i . grad h_i."""
    if space.components != 2:
        raise ValueError("vector space required")
    scalar = FeSpace(space.mesh, space.degree, 1, space.constrained)
    K = assemble_scalar_stiffness(scalar, coefficient, rule)
    return sp.block_diag([K, K], format="csr")


def assemble_strain_gram(space: FeSpace, rule: int = LINEAR_RULE) -> sp.csr_matrix:
    """Gram matrix of integral eps(u):eps(h); u^T G u = ||u||_X^2."""
    tab = space.tabulate(rule)
    B = strain_matrix(tab)
    D = np.broadcast_to(np.eye(3), B.shape[:2] + (3, 3))
    local = kernels.weighted_gram(B, D, tab.wdet)
    return scatter_matrix(local, space.dof_map, space.dof_map, (space.ndof, space.ndof))


def assemble_divergence(velocity_space: FeSpace, pressure_space: FeSpace,
                        rule: int = LINEAR_RULE) -> sp.csr_matrix:
    """Matrix B with (B u)_q = integral psi_q div u."""
    if velocity_space.mesh is not pressure_space.mesh:
        raise ValueError("velocity and pressure spaces must share the same mesh")
    if velocity_space.components != 2 or pressure_space.components != 1:
        raise ValueError("expected vector velocity and scalar pressure spaces")
    tv = velocity_space.tabulate(rule)
    tp = pressure_space.tabulate(rule)
    T = len(velocity_space.mesh.triangles)
    psi = np.broadcast_to(tp.phi, (T,) + tp.phi.shape)
    local = kernels.weighted_outer(psi, divergence_row(tv), tv.wdet)
    return scatter_matrix(local, pressure_space.scalar_dofmap, velocity_space.dof_map,
                          (pressure_space.ndof, velocity_space.ndof))


def norm_X(space: FeSpace, u: np.ndarray, gram: sp.spmatrix | None = None) -> float:
    """Strain-energy norm (integral of I(u))^(1/2)."""
    G = assemble_strain_gram(space) if gram is None else gram
    return float(np.sqrt(max(float(u @ (G @ u)), 0.0)))


# -- load vectors -----------------------------------------------------------

def body_force_at(body, tab: Tabulation) -> np.ndarray:
    """Evaluate a body force (None, constant 2-vector, callable(x, y) or (T, Q, 2) array)."""
    T, Q = tab.wdet.shape
    if body is None:
        return np.zeros((T, Q, 2))
    if callable(body):
        x = tab.points
        f = body(x[..., 0], x[..., 1])
        f = np.stack([np.broadcast_to(np.asarray(c, dtype=float), (T, Q)) for c in f], axis=-1)
        return f
    return np.broadcast_to(np.asarray(body, dtype=float), (T, Q, 2)).copy()


def assemble_body_load(space: FeSpace, body, rule: int = LINEAR_RULE) -> np.ndarray:
    """Vector of (K, h_k) for every vector basis function."""
    if body is None:
        return np.zeros(space.ndof)
    tab = space.tabulate(rule)
    f = body_force_at(body, tab)
    T = len(space.mesh.triangles)
    N = vector_values(tab, T)
    local = kernels.weighted_apply(N, f, tab.wdet)
    return scatter_vector(local, space.dof_map, space.ndof)


def assemble_traction_load(space: FeSpace, traction, kind: TagKind = TagKind.TRACTION) -> np.ndarray:
    """Vector of the boundary integral of F . h_k over edges with the tag.

    ``traction`` is a callable F(x, y, nx, ny) -> (Fx, Fy) or an array (nE, nq, 2)
    matching ``space.edge_tabulate(kind)``.
    """
    out = np.zeros(space.ndof)
    if traction is None:
        return out
    et = space.edge_tabulate(kind)
    if len(et.dofs) == 0:
        return out
    if callable(traction):
        x = et.points
        nrm = np.broadcast_to(et.normals[:, None, :], x.shape)
        F = traction(x[..., 0], x[..., 1], nrm[..., 0], nrm[..., 1])
        F = np.stack([np.broadcast_to(np.asarray(c, dtype=float), x.shape[:2]) for c in F], axis=-1)
    else:
        F = np.asarray(traction, dtype=float)
    for c in range(2):
        contrib = np.einsum("eq,qk,eq->ek", et.weights, et.phi, F[..., c])
        np.add.at(out, et.dofs + c * space.n_scalar, contrib)
    return out


def assemble_scalar_load(space: FeSpace, f, rule: int = LINEAR_RULE) -> np.ndarray:
    tab = space.tabulate(rule)
    vals = coefficient_at(f, tab)
    T = len(space.mesh.triangles)
    phi = np.broadcast_to(tab.phi, (T,) + tab.phi.shape)
    local = np.einsum("tq,tqn->tn", tab.wdet * vals, phi)
    return scatter_vector(local, space.scalar_dofmap, space.n_scalar)


def integrate(space: FeSpace, values: np.ndarray, rule: int | None = None) -> float:
    """Integral of per-quadrature-point values (T, Q) on the space's mesh."""
    tab = space.tabulate(rule if rule is not None else LINEAR_RULE)
    return float(np.sum(tab.wdet * values))
