"""Assembly of the convective trilinear form q(a, v, w) = rho (a . grad v, w).

Matrices follow the convention w^T C v = form(a, v, w) on the full vector
P2 space (component-major dofs).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .. import kernels
from ..fem_core.assembly import scatter_matrix
from ..fem_core.quadrature import NONLINEAR_RULE
from ..fem_core.space import FeSpace, Tabulation

VARIANTS = ("q", "q1")


def _weights(tab: Tabulation, rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    return tab.wdet * np.broadcast_to(rho, tab.wdet.shape)


def _field_qp(space: FeSpace, a, tab: Tabulation):
    """Values (T, Q, 2) and gradients (T, Q, 2, 2) of a dof vector, or values of a qp array."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return space.eval_qp(a, tab)
    return a, None


def _block_scatter(space: FeSpace, blocks: dict) -> sp.csr_matrix:
    """Assemble element blocks keyed by (row component, col component)."""
    n = space.n_scalar
    sd = space.scalar_dofmap
    total = None
    for (i, k), loc in blocks.items():
        A = scatter_matrix(loc, sd + i * n, sd + k * n, (space.ndof, space.ndof))
        total = A if total is None else total + A
    return total.tocsr()


def advection_matrix(space: FeSpace, a, rho=1.0, variant: str = "q",
                     tab: Tabulation | None = None) -> sp.csr_matrix:
    """C with w^T C v = q(a, v, w) (or q1(a, v, w) = (q(a, v, w) - q(a, w, v)) / 2).

    ``a`` is a velocity dof vector or an array (T, Q, 2) of values at the
    points of ``tab``; ``rho`` is a scalar or a (T, Q) array.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown convection variant {variant!r}")
    tab = tab or space.tabulate(NONLINEAR_RULE)
    vals, _ = _field_qp(space, a, tab)
    w = _weights(tab, rho)
    T = len(space.mesh.triangles)
    phi = np.broadcast_to(tab.phi, (T,) + tab.phi.shape)
    adv = np.einsum("tqd,tqnd->tqn", vals, tab.grads)
    loc = kernels.weighted_outer(phi, adv, w)
    C = _block_scatter(space, {(0, 0): loc, (1, 1): loc})
    if variant == "q1":
        C = 0.5 * (C - C.T)
    return sp.csr_matrix(C)


def reaction_matrix(space: FeSpace, u, rho=1.0, variant: str = "q",
                    tab: Tabulation | None = None) -> sp.csr_matrix:
    """D with w^T D v = q(v, u, w) (or q1(v, u, w)) for a fixed velocity dof vector u."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown convection variant {variant!r}")
    tab = tab or space.tabulate(NONLINEAR_RULE)
    vals, grads = space.eval_qp(np.asarray(u, dtype=float), tab)
    w = _weights(tab, rho)
    T = len(space.mesh.triangles)
    phi = np.broadcast_to(tab.phi, (T,) + tab.phi.shape)
    blocks = {}
    for i in range(2):
        for k in range(2):
            # q(v, u, w): phi_a e_i (rows) against phi_b e_k (cols), weight du_i/dx_k
            loc = kernels.weighted_outer(phi, phi, w * grads[:, :, i, k])
            if variant == "q1":
                # q(v, w, u): d(phi_a)/dx_k u_i phi_b
                loc = 0.5 * (loc - kernels.weighted_outer(tab.grads[..., k], phi, w * vals[:, :, i]))
            blocks[(i, k)] = loc
    return _block_scatter(space, blocks)


def convection_vector(space: FeSpace, a, u, rho=1.0, variant: str = "q",
                      tab: Tabulation | None = None) -> np.ndarray:
    """The dual vector k -> form(a, u, phi_k)."""
    return advection_matrix(space, a, rho, variant, tab) @ np.asarray(u, dtype=float)


def trilinear(space: FeSpace, a, v, w, rho=1.0, variant: str = "q", tab: Tabulation | None = None) -> float:
    """Scalar value of q(a, v, w) (or q1) with every argument a dof vector."""
    tab = tab or space.tabulate(NONLINEAR_RULE)
    a_vals, _ = space.eval_qp(np.asarray(a, dtype=float), tab)
    v_vals, v_grad = space.eval_qp(np.asarray(v, dtype=float), tab)
    w_vals, w_grad = space.eval_qp(np.asarray(w, dtype=float), tab)
    wt = _weights(tab, rho)
    qv = np.sum(wt * np.einsum("tqk,tqik,tqi->tq", a_vals, v_grad, w_vals))
    if variant == "q":
        return float(qv)
    qw = np.sum(wt * np.einsum("tqk,tqik,tqi->tq", a_vals, w_grad, v_vals))
    return float(0.5 * (qv - qw))

