"""Sparse linear solves and Dirichlet elimination."""

from __future__ import annotations

import io

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverFailure(RuntimeError):
    """A linear solve failed; the message carries diagnostics."""


def solve_linear(A, b: np.ndarray, method: str = "direct", tol: float = 1e-12,
                 maxiter: int | None = None) -> np.ndarray:
    """Solve A x = b with a sparse direct factorization or Jacobi-preconditioned CG."""
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix is not square: {A.shape}")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)
    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:
            raise SolverFailure(f"direct solve failed: {exc} (n={n}, nnz={A.nnz})") from None
        x = lu.solve(b)
        # iterative refinement recovers digits lost to pivoting on saddle systems
        for _ in range(3):
            r = b - A @ x
            if not np.all(np.isfinite(r)) or np.linalg.norm(r) <= tol * bnorm:
                break
            x = x + lu.solve(r)
    elif method in ("cg", "conjugate-gradient"):
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverFailure(f"CG needs a positive diagonal; min diagonal = {d.min():.3e}")
        M = sp.diags(1.0 / d)
        x, info = spla.cg(A, b, rtol=tol, atol=0.0, M=M, maxiter=maxiter or 10 * n)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / bnorm
            raise SolverFailure(f"CG did not converge (info={info}, relative residual {res:.3e})")
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(x)):
        raise SolverFailure("solution has non-finite entries (singular matrix?)")
    res = float(np.linalg.norm(A @ x - b))
    if res > 1e-6 * bnorm:
        raise SolverFailure(f"relative residual {res / bnorm:.3e} after solve; matrix singular or indefinite")
    return x


def eliminate(A, b: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    """Reduce A x = b to the free dofs given prescribed values on ``fixed``.

    Returns (A_ff, b_f - A_fc x_c, free index array).
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    mask = np.ones(n, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    xc = np.zeros(n)
    xc[fixed] = values
    rhs = b - A @ xc
    return A[free][:, free].tocsr(), rhs[free], free


def solve_with_dirichlet(A, b, fixed, values, method: str = "direct", tol: float = 1e-12) -> np.ndarray:
    Aff, bf, free = eliminate(A, b, fixed, values)
    x = np.zeros(A.shape[0])
    x[fixed] = values
    if len(free):
        x[free] = solve_linear(Aff, bf, method=method, tol=tol)
    return x


class Factorized:
    """Reusable sparse LU factorization."""

    def __init__(self, A):
        self.shape = A.shape
        try:
            self._lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise SolverFailure(f"factorization failed: {exc}") from None

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))


def to_matrix_market(A) -> str:
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(A), precision=17)
    return buf.getvalue().decode()
