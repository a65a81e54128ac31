"""Augmented Lagrangian outer iteration and its inner solvers.

For a fixed multiplier p the inner problem is

    N(v) + r B^T M^-1 B (lift + v) - B^T p = f      on free velocity dofs,

where M is the pressure mass matrix, so that r (M^-1 B w, B h) is the
augmentation r (div w, div h) seen through the pressure space. Inner linear
systems keep the auxiliary unknown z = M^-1 B (lift + v), which keeps them
sparse:

    [ T    r B^T ] [dv]   [ -F ]
    [ B    -M    ] [dz] = [  0 ]
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from ..fem_core.linalg import SolverFailure, solve_linear
from ..viscosity.models import Variant
from .problem import ConfigError, FlowProblem, FlowState, InnerMethod, SolverConfig, SolverReport


def inner_residual(problem: FlowProblem, v: np.ndarray, p: np.ndarray, r: float, rhs_extra=None) -> np.ndarray:
    """Free-dof residual of the inner problem for multiplier p."""
    w = problem.lifting.u + v
    z = problem.M_p_lu.solve(problem.B @ w)
    F = problem.ctx.residual(v) + r * (problem.B.T @ z) - problem.B.T @ p - problem.load
    if rhs_extra is not None:
        F = F - rhs_extra
    return F[problem.free]


def _aux_matrix(problem: FlowProblem, T_ff, r: float) -> sp.csc_matrix:
    Bf = problem.B_free
    return sp.bmat([[T_ff, r * Bf.T], [Bf, -problem.M_p]], format="csc")


def _newton_inner(problem, v, p, r, tol, max_iter, method):
    free = problem.free
    nf = len(free)
    F = inner_residual(problem, v, p, r)
    res = problem.dual_norm(F)
    it = 0
    while res > tol and it < max_iter:
        T = problem.ctx.tangent(v)[free][:, free]
        A = _aux_matrix(problem, T, r)
        d = solve_linear(A, np.concatenate([-F, np.zeros(problem.pspace.ndof)]), method=method)
        dv = np.zeros_like(v)
        dv[free] = d[:nf]
        step = 1.0
        f0 = float(np.linalg.norm(F))
        for _ in range(20):
            try:
                Ft = inner_residual(problem, v + step * dv, p, r)
            except ArithmeticError:
                step *= 0.5
                continue
            if np.linalg.norm(Ft) < f0:
                break
            step *= 0.5
        else:
            break
        v = v + step * dv
        F = Ft
        res = problem.dual_norm(F)
        it += 1
    return v, res, it


def birger_kachanov_step(problem: FlowProblem, v: np.ndarray, p: np.ndarray, r: float,
                         method: str = "direct") -> np.ndarray:
    """One frozen-coefficient linear solve.

    The viscosity is evaluated at the lift + v, then the linear problem
    2 (c eps(lift + w), eps(h)) + r (B w, B h) = (f + B^T p, h) is solved for w.
    """
    free = problem.free
    nf = len(free)
    K = problem.ctx.secant_matrix(v)
    lift = problem.lifting.u
    rhs_v = (problem.load + problem.B.T @ p - K @ lift)[free]
    rhs_z = -(problem.B @ lift)
    A = _aux_matrix(problem, K[free][:, free], r)
    d = solve_linear(A, np.concatenate([rhs_v, rhs_z]), method=method)
    w = np.zeros_like(v)
    w[free] = d[:nf]
    return w


def _check_bk_hypothesis(model) -> None:
    """Frozen-coefficient convergence is proved for a nonincreasing smooth part."""
    if model.variant is not Variant.GIVEN_MU:
        warnings.warn("Birger-Kachanov convergence is established for GIVEN_MU models only", RuntimeWarning,
                      stacklevel=3)
        return
    I = np.concatenate([[0.0], np.logspace(-6, 4, 200)])
    for absE in (0.0, 1.0, 10.0):
        for mu in (0.0, 0.5, 1.0):
            d = model.psi1.eval(I, absE, mu)[1]
            if np.any(d > 1e-12):
                warnings.warn("psi1 is not nonincreasing in I; Birger-Kachanov convergence is not guaranteed",
                              RuntimeWarning, stacklevel=3)
                return


def solve_inner(problem: FlowProblem, p: np.ndarray, r: float, method: InnerMethod, v0: np.ndarray,
                tol: float, max_iter: int, linear_method: str = "direct", t="AUTO"):
    """Solve the inner problem for fixed p. Returns (v, residual, iterations)."""
    if method is InnerMethod.NEWTON:
        return _newton_inner(problem, v0.copy(), p, r, tol, max_iter, linear_method)
    if method is InnerMethod.BIRGER_KACHANOV:
        v = v0.copy()
        res = problem.dual_norm(inner_residual(problem, v, p, r))
        it = 0
        while res > tol and it < max_iter:
            v = birger_kachanov_step(problem, v, p, r, linear_method)
            res = problem.dual_norm(inner_residual(problem, v, p, r))
            it += 1
        return v, res, it
    if method is InnerMethod.CONTRACTION:
        from .contraction import contraction_solve
        v, rep = contraction_solve(problem, r, p=p, t=t, v0=v0, tol=tol, max_iter=max_iter)
        return v, rep.rows[-1]["residual"] if rep.rows else np.nan, rep.iterations
    raise ConfigError(f"inner method {method.value} is not available for the augmented Lagrangian")


def augmented_lagrangian_solve(problem: FlowProblem, config: SolverConfig | None = None,
                               initial: FlowState | None = None, reference: FlowState | None = None,
                               inner_tol: float | None = None) -> tuple[FlowState, SolverReport]:
    """Multiplier iteration p <- p - rho M^-1 B (lift + v).

    With ``reference`` the report also records the pressure error norm
    against it (column ``p_error``).
    """
    cfg = config or SolverConfig()
    r = cfg.resolved_r(problem.model)
    if cfg.rho_schedule is not None:
        rho_all = np.atleast_1d(np.asarray(cfg.rho_schedule, dtype=float))
        if np.any(rho_all >= 2 * r) or np.any(rho_all <= 0):
            raise ConfigError(f"multiplier steps must lie in (0, 2r) with r = {r!r}")
    if cfg.inner_method is InnerMethod.BIRGER_KACHANOV:
        _check_bk_hypothesis(problem.model)
    rep = SolverReport(f"AUGMENTED_LAGRANGIAN/{cfg.inner_method.value}")
    rep.constants.update(r=r)
    state = (initial or problem.zero_state()).copy()
    v, p = state.v, state.p
    tol_in = (inner_tol if inner_tol is not None else 1e-2 * cfg.tol_residual) * problem.residual_scale
    converged = False
    message = ""
    for m in range(cfg.max_outer):
        rho = cfg.rho(m, r)
        try:
            v_new, res, its = solve_inner(problem, p, r, cfg.inner_method, v, tol_in, cfg.max_inner,
                                          cfg.linear_method, cfg.t)
        except (SolverFailure, ArithmeticError) as exc:
            message = f"inner solve failed at outer iteration {m}: {exc}"
            break
        if res > tol_in:
            message = f"inner solve did not converge at outer iteration {m} (residual {res:.3e})"
            v = v_new
            break
        w = problem.lifting.u + v_new
        z = problem.M_p_lu.solve(problem.B @ w)
        dp = -rho * z
        dv_norm = problem.x_norm(v_new - v)
        v, p = v_new, p + dp
        div = problem.div_norm(w)
        row = dict(iteration=m + 1, div_norm=div, residual=res, p_increment=problem.pressure_norm(dp),
                   velocity_increment=dv_norm, inner_iterations=its, rho=rho)
        if reference is not None:
            row["p_error"] = problem.pressure_norm(p - reference.p)
        rep.record(**row)
        if div <= cfg.tol_divergence and dv_norm <= cfg.tol_velocity:
            converged = True
            break
    else:
        message = f"no convergence after {cfg.max_outer} outer iterations"
    return FlowState(problem, v, p), rep.finish(converged, message)
