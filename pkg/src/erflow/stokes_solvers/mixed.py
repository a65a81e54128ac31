"""Monolithic damped Newton solve of the mixed velocity/pressure system."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..fem_core.linalg import SolverFailure, solve_linear
from .problem import FlowProblem, FlowState, SolverConfig, SolverReport


class NonConvergence(RuntimeError):
    """Raised on request when an iteration stops without meeting its tolerances."""

    def __init__(self, message: str, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report


def _saddle_matrix(problem: FlowProblem, T_ff: sp.spmatrix) -> sp.csr_matrix:
    Bf = problem.B_free
    if problem.needs_pressure_gauge:
        m = problem.pressure_mean_row
        return sp.bmat([[T_ff, -Bf.T, None],
                        [-Bf, None, sp.csr_matrix(m[:, None])],
                        [None, sp.csr_matrix(m[None, :]), None]], format="csc")
    return sp.bmat([[T_ff, -Bf.T], [-Bf, None]], format="csc")


def mixed_residual(problem: FlowProblem, v, p, ell: float, linear_term=None,
                   extra_rhs: np.ndarray | None = None) -> np.ndarray:
    rv = problem.momentum_residual(v, p, linear_term)
    if extra_rhs is not None:
        rv = rv - extra_rhs[problem.free]
    rc = -(problem.B @ (problem.lifting.u + v))
    if problem.needs_pressure_gauge:
        rc = rc + problem.pressure_mean_row * ell
        return np.concatenate([rv, rc, [problem.pressure_mean_row @ p]])
    return np.concatenate([rv, rc])


def solve_mixed(problem: FlowProblem, config: SolverConfig | None = None, initial: FlowState | None = None,
                linear_term: sp.spmatrix | None = None, extra_rhs: np.ndarray | None = None,
                raise_on_failure: bool = False) -> tuple[FlowState, SolverReport]:
    """Damped Newton iteration on the full saddle system.

    ``linear_term`` is a constant matrix acting on the total velocity (used
    for frozen convection); ``extra_rhs`` adds to the load.
    Stops when the dual-norm momentum residual is below ``tol_residual`` (relative
    to ``problem.residual_scale``) and
    the divergence norm below ``tol_divergence``.
    """
    cfg = config or SolverConfig()
    rep = SolverReport("NEWTON")
    state = (initial or problem.zero_state()).copy()
    free = problem.free
    nf, npres = len(free), problem.pspace.ndof
    ell = 0.0
    v, p = state.v, state.p
    v[problem.vspace.dirichlet_dofs] = 0.0
    R = mixed_residual(problem, v, p, ell, linear_term, extra_rhs)
    converged = False
    message = ""
    for it in range(cfg.max_outer + 1):
        res = problem.dual_norm(R[:nf])
        div = problem.div_norm(problem.lifting.u + v)
        if it > 0:
            rep.rows[-1].update(residual=res, div_norm=div)
        else:
            rep.record(iteration=0, div_norm=div, residual=res, p_increment=0.0, step=0.0)
        if res <= cfg.tol_residual * problem.residual_scale and div <= cfg.tol_divergence:
            converged = True
            break
        if it == cfg.max_outer:
            message = f"no convergence after {cfg.max_outer} Newton steps (residual {res:.3e}, div {div:.3e})"
            break
        T = problem.ctx.tangent(v)
        if linear_term is not None:
            T = T + linear_term
        T_ff = T[free][:, free]
        A = _saddle_matrix(problem, T_ff)
        try:
            d = solve_linear(A, -R, method=cfg.linear_method)
        except SolverFailure as exc:
            message = f"singular tangent at Newton step {it}: {exc}"
            break
        dv = np.zeros_like(v)
        dv[free] = d[:nf]
        dp = d[nf:nf + npres]
        dl = d[nf + npres] if problem.needs_pressure_gauge else 0.0
        r0 = float(np.linalg.norm(R))
        step, used = 1.0, 0.0
        vt, pt, Rt = v, p, R
        for _ in range(20):
            try:
                cand = mixed_residual(problem, v + step * dv, p + step * dp, ell + step * dl, linear_term, extra_rhs)
            except ArithmeticError:
                step *= 0.5
                continue
            if np.all(np.isfinite(cand)) and np.linalg.norm(cand) < r0:
                vt, pt, Rt, used = v + step * dv, p + step * dp, cand, step
                if np.linalg.norm(cand) < (1.0 - 1e-4 * step) * r0:
                    break
            elif used:
                break
            step *= 0.5
        if not used:
            message = f"line search failed at Newton step {it}"
            break
        step = used
        v, p, ell, R = vt, pt, ell + step * dl, Rt
        rep.record(iteration=it + 1, div_norm=np.nan, residual=np.nan,
                   p_increment=problem.pressure_norm(step * dp), step=step)
    if rep.rows and np.isnan(rep.rows[-1].get("residual", 0.0)):
        rep.rows[-1].update(residual=problem.dual_norm(R[:nf]), div_norm=problem.div_norm(problem.lifting.u + v))
    out = FlowState(problem, v, p)
    rep.finish(converged, message)
    if raise_on_failure and not converged:
        raise NonConvergence(message, out, rep)
    return out, rep
