"""Preconditioned fixed-point (contraction) iteration for the inner problem.

    A u_{m+1} = A u_m - t [N(u_m) + r B*B u_m - f]

with A the componentwise Laplacian, so that each step is two independent
scalar solves with factorizations computed once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..fem_core.assembly import assemble_scalar_stiffness
from ..fem_core.linalg import Factorized
from ..fem_core.space import FeSpace
from ..viscosity.conditions import inferred_bounds
from ..viscosity.models import Bounds, Variant
from .problem import ConfigError, FlowProblem, SolverReport


@dataclass(frozen=True)
class ContractionConstants:
    mu1: float
    mu2: float
    q1: float
    q2: float
    q3: float
    t0: float
    k0: float

    def k(self, t: float) -> float:
        """Contraction factor for step t (>= 1 outside the admissible interval)."""
        val = 1.0 - 2.0 * self.q1 * t + self.q3 ** 2 * t ** 2
        return float(np.sqrt(max(val, 0.0)))

    @property
    def t_max(self) -> float:
        return 2.0 * self.q1 / self.q3 ** 2


def contraction_constants(a1: float, a2: float, a3: float, a4: float, a5: float, lam: float,
                          b1: float, b2: float, r: float = 0.0, normBtB: float = 0.0) -> ContractionConstants:
    """Monotonicity and Lipschitz constants of the inner operator in the A-norm.

    mu1 = min(2 a1, 2 a3), mu2 = 2 a2 + 4 a4, q1 = mu1 / b1,
    q2 = (mu2 + 4 a5 lam^-1/2) b2^-1/2, q3 = q2 + r ||B*B||,
    t0 = q1 / q3^2 and k0 = (1 - q1^2 / q3^2)^1/2.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam!r}")
    if not (b1 > 0 and b2 > 0):
        raise ValueError("A-operator bounds b1, b2 must be positive")
    if min(a1, a2, a3) <= 0 or min(a4, a5, r, normBtB) < 0:
        raise ValueError("viscosity bounds must be positive (a4, a5 nonnegative)")
    mu1 = min(2.0 * a1, 2.0 * a3)
    mu2 = 2.0 * a2 + 4.0 * a4
    q1 = mu1 / b1
    q2 = (mu2 + 4.0 * a5 / np.sqrt(lam)) / np.sqrt(b2)
    q3 = q2 + r * normBtB
    t0 = q1 / q3 ** 2
    k0 = float(np.sqrt(max(1.0 - (q1 / q3) ** 2, 0.0)))
    return ContractionConstants(float(mu1), float(mu2), float(q1), float(q2), float(q3), float(t0), k0)


def laplacian_blocks(problem: FlowProblem, g=1.0):
    """Free-dof blocks of the componentwise Laplacian and the free-dof split by component."""
    V = problem.vspace
    scalar = FeSpace(V.mesh, V.degree, 1, V.constrained)
    K = assemble_scalar_stiffness(scalar, g)
    free_s = np.setdiff1d(np.arange(scalar.ndof), scalar.constrained_scalar_dofs)
    K_ff = K[free_s][:, free_s].tocsc()
    return K_ff, free_s


class SplitPreconditioner:
    """A = diag(K, K) restricted to free dofs; solves componentwise."""

    def __init__(self, problem: FlowProblem, g=1.0):
        K_ff, free_s = laplacian_blocks(problem, g)
        n = problem.vspace.n_scalar
        free = problem.free
        expected = np.concatenate([free_s, free_s + n])
        if not np.array_equal(free, expected):
            raise ConfigError("componentwise split needs identical constraints on both components")
        self.K = K_ff
        self.lu = Factorized(K_ff)
        self.m = len(free_s)
        self.matrix = sp.block_diag([K_ff, K_ff], format="csr")

    def solve(self, b: np.ndarray) -> np.ndarray:
        m = self.m
        return np.concatenate([self.lu.solve(b[:m]), self.lu.solve(b[m:])])

    def __matmul__(self, x):
        return self.matrix @ x


class MatrixPreconditioner:
    def __init__(self, A):
        self.matrix = sp.csr_matrix(A)
        self.lu = Factorized(self.matrix)

    def solve(self, b):
        return self.lu.solve(b)

    def __matmul__(self, x):
        return self.matrix @ x


def estimate_A_bounds(problem: FlowProblem, A) -> tuple[float, float]:
    """(b1, b2): largest and smallest eigenvalues of A relative to the strain Gram matrix."""
    G = problem.gram[problem.free][:, problem.free].tocsc()
    Am = A.matrix.tocsc() if hasattr(A, "matrix") else sp.csc_matrix(A)
    n = Am.shape[0]
    if n <= 600:
        import scipy.linalg
        ev = scipy.linalg.eigh(Am.toarray(), G.toarray(), eigvals_only=True)
        return float(ev[-1]), float(ev[0])
    top = spla.eigsh(Am, k=1, M=G, which="LA", return_eigenvectors=False, tol=1e-8)[0]
    low = spla.eigsh(Am, k=1, M=G, sigma=0.0, which="LM", return_eigenvectors=False, tol=1e-8)[0]
    return float(top), float(low)


def estimate_BtB_norm(problem: FlowProblem, A, iterations: int = 50, seed: int = 0) -> float:
    """Power iteration for sup (M^-1 B u, B u) / (A u, u)."""
    rng = np.random.default_rng(seed)
    Bf = problem.B_free
    x = rng.standard_normal(Bf.shape[1])
    est = 0.0
    for _ in range(iterations):
        y = A.solve(Bf.T @ problem.M_p_lu.solve(Bf @ x))
        nrm = np.sqrt(max(y @ (A @ y), 0.0))
        if nrm == 0:
            return 0.0
        x = y / nrm
        Bx = Bf @ x
        est = float(Bx @ problem.M_p_lu.solve(Bx))
    return est


def model_bounds(model) -> tuple[Bounds, float]:
    """(bounds of the smooth part, bound a5 of the yield part) for the constants."""
    if model.variant is Variant.GIVEN_MU:
        smooth = model.psi1
    elif model.variant in (Variant.REGULARIZED_BINGHAM, Variant.SINGULAR_BINGHAM):
        smooth = model.psi
    elif model.variant is Variant.REGULAR:
        smooth = model
    else:
        raise ConfigError("contraction constants need a model with a smooth part")
    b = smooth.bounds
    if any(getattr(b, n) is None for n in ("a1", "a2", "a3", "a4")):
        b = inferred_bounds(smooth)
    a5 = 0.0
    if hasattr(model, "yield_coef"):
        a5 = model.bounds.a5 if model.bounds.a5 is not None else inferred_bounds(model).a5
    return b, float(a5 or 0.0)


def problem_constants(problem: FlowProblem, r: float, A) -> tuple[ContractionConstants, dict]:
    b, a5 = model_bounds(problem.model)
    lam = float(getattr(problem.model, "lam", 1.0)) if problem.model.variant is not Variant.REGULAR else 1.0
    b1, b2 = estimate_A_bounds(problem, A)
    nbb = estimate_BtB_norm(problem, A) if r > 0 else 0.0
    c = contraction_constants(b.a1, b.a2, b.a3, b.a4, a5, lam, b1, b2, r, nbb)
    return c, dict(b1=b1, b2=b2, normBtB=nbb, a5=a5, **{f"a{i}": getattr(b, f"a{i}") for i in range(1, 5)})


def contraction_solve(problem: FlowProblem, r: float, p: np.ndarray | None = None, A=None, t="AUTO",
                      v0: np.ndarray | None = None, tol: float = 1e-10, max_iter: int = 500,
                      reference: np.ndarray | None = None, constants: ContractionConstants | None = None):
    """Iterate the preconditioned fixed-point map; returns (v, report).

    ``A`` defaults to the componentwise Laplacian. With ``reference`` each
    row also carries the A-norm error and its ratio to the previous one.
    The iteration stops when the A-norm increment drops below ``tol``.
    """
    from .augmented import inner_residual

    P = SplitPreconditioner(problem) if A is None else (A if hasattr(A, "solve") else MatrixPreconditioner(A))
    rep = SolverReport("CONTRACTION")
    auto = isinstance(t, str)
    if auto or constants is None:
        try:
            c, extra = problem_constants(problem, r, P)
        except (ConfigError, ValueError):
            if auto:
                raise
            c, extra = None, {}
        constants = constants or c
        rep.constants.update(extra)
    if constants is not None:
        rep.constants.update(q1=constants.q1, q2=constants.q2, q3=constants.q3, t0=constants.t0, k0=constants.k0)
    if auto:
        if t.upper() != "AUTO":
            raise ConfigError(f"unknown step {t!r}")
        t = constants.t0
    t = float(t)
    if constants is not None and not 0 < t < constants.t_max:
        raise ConfigError(f"step t = {t!r} outside the admissible interval (0, {constants.t_max!r})")
    if constants is not None:
        rep.constants.update(t=t, k_t=constants.k(t))
    p = np.zeros(problem.pspace.ndof) if p is None else p
    free = problem.free
    v = np.zeros(problem.vspace.ndof) if v0 is None else v0.copy()

    def a_norm(x):
        return float(np.sqrt(max(x @ (P @ x), 0.0)))

    err_prev = a_norm(v[free] - reference[free]) if reference is not None else None
    if reference is not None:
        rep.constants["initial_error"] = err_prev
    F = inner_residual(problem, v, p, r)
    rep.constants["initial_residual"] = float(np.sqrt(max(F @ P.solve(F), 0.0)))
    converged = False
    for m in range(1, max_iter + 1):
        step = -t * P.solve(F)
        v[free] += step
        F = inner_residual(problem, v, p, r)
        inc = a_norm(step)
        row = dict(iteration=m, residual=float(np.sqrt(max(F @ P.solve(F), 0.0))), increment=inc)
        if reference is not None:
            err = a_norm(v[free] - reference[free])
            row["error"] = err
            row["ratio"] = err / err_prev if err_prev > 0 else 0.0
            err_prev = err
        rep.record(**row)
        if inc <= tol:
            converged = True
            break
    return v, rep.finish(converged, "" if converged else f"no convergence after {max_iter} iterations")
