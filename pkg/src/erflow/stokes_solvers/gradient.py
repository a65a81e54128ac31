"""Steepest descent on the squared residual of the full mixed system.

The unknown is the stacked vector c = (free velocity dofs, pressure dofs,
and the pressure-mean multiplier when the problem needs one). The objective
is Phi2(c) = sum_i M_i(c)^2 with gradient 2 J(c)^T M(c).
"""

from __future__ import annotations

import numpy as np

from .mixed import _saddle_matrix, mixed_residual
from .problem import FlowProblem, FlowState, SolverConfig, SolverReport


def _split(problem: FlowProblem, c: np.ndarray):
    nf, npres = len(problem.free), problem.pspace.ndof
    v = np.zeros(problem.vspace.ndof)
    v[problem.free] = c[:nf]
    p = c[nf:nf + npres]
    ell = float(c[nf + npres]) if problem.needs_pressure_gauge else 0.0
    return v, p, ell


def pack_state(problem: FlowProblem, state: FlowState, ell: float = 0.0) -> np.ndarray:
    parts = [state.v[problem.free], state.p]
    if problem.needs_pressure_gauge:
        parts.append([ell])
    return np.concatenate(parts)


def saddle_residual(problem: FlowProblem, c: np.ndarray, linear_term=None) -> np.ndarray:
    v, p, ell = _split(problem, c)
    return mixed_residual(problem, v, p, ell, linear_term)


def saddle_jacobian(problem: FlowProblem, c: np.ndarray, linear_term=None):
    v, _, _ = _split(problem, c)
    T = problem.ctx.tangent(v)
    if linear_term is not None:
        T = T + linear_term
    return _saddle_matrix(problem, T[problem.free][:, problem.free]).tocsr()


def phi2(problem: FlowProblem, c: np.ndarray, linear_term=None) -> float:
    R = saddle_residual(problem, c, linear_term)
    return float(R @ R)


def phi2_gradient(problem: FlowProblem, c: np.ndarray, linear_term=None) -> np.ndarray:
    R = saddle_residual(problem, c, linear_term)
    return 2.0 * (saddle_jacobian(problem, c, linear_term).T @ R)


def gradient_solve(problem: FlowProblem, config: SolverConfig | None = None, initial: FlowState | None = None,
                   linear_term=None, armijo: float = 1e-4) -> tuple[FlowState, SolverReport]:
    """Backtracking steepest descent on Phi2.

    The first trial step along -g is the exact minimizer of the local
    quadratic model |R + J d|^2, which for a linear problem makes each
    iteration an exact line search on the normal equations.
    """
    cfg = config or SolverConfig()
    rep = SolverReport("GRADIENT")
    c = pack_state(problem, initial or problem.zero_state())
    R = saddle_residual(problem, c, linear_term)
    f = float(R @ R)
    target = cfg.tol_residual ** 2
    rep.constants["initial_phi2"] = f
    converged = f <= target
    message = ""
    it = 0
    while not converged and it < cfg.max_inner:
        J = saddle_jacobian(problem, c, linear_term)
        g = 2.0 * (J.T @ R)
        gg = float(g @ g)
        if gg == 0.0:
            message = "zero gradient at a nonzero residual"
            break
        Jg = J @ g
        denom = float(Jg @ Jg)
        step = gg / (2.0 * denom) if denom > 0 else 1.0
        for _ in range(40):
            try:
                Rt = saddle_residual(problem, c - step * g, linear_term)
            except ArithmeticError:
                step *= 0.5
                continue
            ft = float(Rt @ Rt)
            if np.isfinite(ft) and ft <= f - armijo * step * gg:
                break
            step *= 0.5
        else:
            message = f"line search stagnated at iteration {it} (phi2 {f:.3e})"
            break
        c = c - step * g
        R, f = Rt, ft
        it += 1
        rep.record(iteration=it, phi2=f, step=step, grad_norm=float(np.sqrt(gg)))
        converged = f <= target
    if not converged and not message:
        message = f"phi2 {f:.3e} above target after {cfg.max_inner} iterations"
    v, p, _ = _split(problem, c)
    return FlowState(problem, v, p), rep.finish(converged, message)
