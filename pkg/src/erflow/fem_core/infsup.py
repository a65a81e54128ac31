"""Discrete inf-sup constant of a velocity/pressure pair."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .assembly import assemble_divergence, assemble_mass, assemble_strain_gram
from .linalg import Factorized, SolverFailure
from .space import FeSpace


@dataclass
class InfSupResult:
    beta: float
    eigenvalues: np.ndarray
    zero_modes: int
    expected_zero_modes: int

    @property
    def spurious_modes(self) -> int:
        return self.zero_modes - self.expected_zero_modes


def estimate_discrete_infsup(velocity_space: FeSpace, pressure_space: FeSpace,
                             zero_tol: float = 1e-10, block: int = 256) -> InfSupResult:
    """Solve B G^-1 B^T q = beta^2 M q on the free velocity dofs.

    G is the strain Gram matrix (the X inner product) and M the pressure mass
    matrix. Eigenvalues below ``zero_tol`` times the largest count as zero modes;
    when no TRACTION edge exists the constant pressure is one expected zero mode.
    The returned beta is the square root of the smallest eigenvalue above that
    threshold.
    """
    free = velocity_space.free_dofs
    if len(free) == 0:
        raise SolverFailure("no free velocity dofs: inf-sup constant undefined")
    G = assemble_strain_gram(velocity_space)[free][:, free]
    B = assemble_divergence(velocity_space, pressure_space)[:, free].tocsc()
    M = assemble_mass(pressure_space).toarray()
    lu = Factorized(G)
    npres = B.shape[0]
    S = np.empty((npres, npres))
    Bt = B.T.tocsc()
    for start in range(0, npres, block):
        stop = min(npres, start + block)
        rhs = Bt[:, start:stop].toarray()
        Y = lu.solve(rhs)
        S[:, start:stop] = B @ Y
    S = 0.5 * (S + S.T)
    try:
        ev = scipy.linalg.eigh(S, M, eigvals_only=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolverFailure(f"generalized eigenproblem failed: {exc}") from None
    ev = np.sort(ev)
    top = max(float(ev[-1]), np.finfo(float).tiny)
    zero = int(np.sum(ev <= zero_tol * top))
    expected = 0 if velocity_space.mesh.has_traction() else 1
    if zero >= len(ev):
        return InfSupResult(0.0, ev, zero, expected)
    return InfSupResult(float(np.sqrt(ev[zero])), ev, zero, expected)
