"""Picard iteration for the flow problems with inertia.

With u = lift + v the momentum equation gains the convective term
q(u, u, w). Pure-Dirichlet problems use the skew form q1 for every term that
involves v and keep q(lift, lift, w) on the right-hand side; problems with a
traction boundary use q throughout. Each Picard step freezes the advecting
velocity and solves the resulting Stokes-type system.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from ..fem_core.linalg import SolverFailure, solve_linear
from ..fem_core.quadrature import NONLINEAR_RULE
from ..stokes_solvers.mixed import NonConvergence, _saddle_matrix, mixed_residual, solve_mixed
from ..stokes_solvers.problem import ConfigError, FlowProblem, FlowState, SolverConfig, SolverReport
from .convection import advection_matrix, reaction_matrix

RELAXATION = 0.7
RELAX_TRIGGER = 0.9
GROWTH_LIMIT = 5


class DensityError(ValueError):
    """Density leaves its admissible band."""


@dataclass(eq=False)
class InertialProblem:
    """A flow problem plus the fluid density.

    ``density`` is a positive scalar or a function of |E| that must stay in
    ``density_bounds`` = (rho1, rho2) at every quadrature point.
    ``skew`` selects the skew form (defaults to True exactly when there is no
    traction boundary).
    """

    flow: FlowProblem
    density: float | Callable = 1.0
    density_bounds: tuple[float, float] | None = None
    skew: bool | None = None

    def __post_init__(self):
        if self.skew is None:
            self.skew = not self.flow.has_traction
        rho = self.rho_qp
        lo, hi = self.density_bounds if self.density_bounds is not None else (0.0, np.inf)
        if np.any(~(rho > 0)):
            raise DensityError("density must be positive")
        if np.any(rho < lo) or np.any(rho > hi):
            raise DensityError(f"density outside [{lo!r}, {hi!r}] (range {rho.min():.6g}..{rho.max():.6g})")

    @property
    def variant(self) -> str:
        return "q1" if self.skew else "q"

    @cached_property
    def tab(self):
        return self.flow.vspace.tabulate(NONLINEAR_RULE)

    @cached_property
    def rho_qp(self) -> np.ndarray:
        if callable(self.density):
            absE = self.flow.ctx.absE
            return np.broadcast_to(np.asarray(self.density(absE), dtype=float), absE.shape).copy()
        return np.full(self.tab.wdet.shape, float(self.density))

    def with_density(self, density) -> "InertialProblem":
        return InertialProblem(self.flow, density, self.density_bounds, self.skew)

    def advection(self, a: np.ndarray, variant: str | None = None):
        return advection_matrix(self.flow.vspace, a, self.rho_qp, variant or self.variant, self.tab)

    def reaction(self, u: np.ndarray, variant: str | None = None):
        return reaction_matrix(self.flow.vspace, u, self.rho_qp, variant or self.variant, self.tab)

    @cached_property
    def lift_correction(self) -> np.ndarray:
        """q(lift, lift, .) minus its counterpart in the selected form."""
        lift = self.flow.lifting.u
        if not self.skew or not np.any(lift):
            return np.zeros(self.flow.vspace.ndof)
        return self.advection(lift, "q") @ lift - self.advection(lift) @ lift

    def convective_vector(self, v: np.ndarray) -> np.ndarray:
        """All convective contributions at v as a dual vector (incl. the lift-lift term)."""
        u = self.flow.lifting.u + v
        return self.advection(u) @ u + self.lift_correction

    def picard_operator(self, v_old: np.ndarray):
        """(matrix acting on the total velocity, extra right-hand side) of one Picard step."""
        lift = self.flow.lifting.u
        L = self.advection(lift + v_old) + self.reaction(lift)
        extra = L @ lift - (self.advection(lift) @ lift + self.lift_correction)
        return L, extra

    def residual(self, state: FlowState, ell: float = 0.0) -> np.ndarray:
        return mixed_residual(self.flow, state.v, state.p, ell, extra_rhs=-self.convective_vector(state.v))

    def residual_norm(self, state: FlowState) -> float:
        """Dual norm of the momentum residual with the pressure gauge solved out."""
        r = self.flow.momentum_residual(state.v, state.p) + self.convective_vector(state.v)[self.flow.free]
        return self.flow.dual_norm(r)


def _check_regime(problem: InertialProblem, dirichlet: bool) -> None:
    if dirichlet and problem.flow.has_traction:
        raise ConfigError("the pure-Dirichlet inertial solve needs an empty traction boundary")
    if not dirichlet and not problem.flow.has_traction:
        raise ConfigError("the mixed inertial solve needs a traction boundary")


def picard_solve(problem: InertialProblem, config: SolverConfig | None = None,
                 initial: FlowState | None = None) -> tuple[FlowState, SolverReport]:
    """Frozen-advection fixed point iteration.

    Stops when the X-norm increment is below ``tol_velocity`` relative to
    max(1, |u|_X). Updates are under-relaxed by 0.7 whenever the increment
    ratio exceeds 0.9; five consecutive increment growths abort the run.
    """
    cfg = config or SolverConfig()
    flow = problem.flow
    rep = SolverReport(f"PICARD/{problem.variant}")
    rep.constants.update(relaxation=RELAXATION, relax_trigger=RELAX_TRIGGER)
    state = (initial or flow.zero_state()).copy()
    inner = SolverConfig(tol_residual=cfg.tol_residual, tol_divergence=cfg.tol_divergence,
                         max_outer=cfg.max_inner, linear_method=cfg.linear_method)
    prev_inc = np.inf
    growth = 0
    converged = False
    message = ""
    for m in range(1, cfg.max_outer + 1):
        L, extra = problem.picard_operator(state.v)
        new, srep = solve_mixed(flow, inner, state, linear_term=L, extra_rhs=extra)
        if not srep.converged:
            message = f"linearized solve failed at Picard step {m}: {srep.message}"
            break
        dv = new.v - state.v
        inc = flow.x_norm(dv)
        ratio = inc / prev_inc if np.isfinite(prev_inc) and prev_inc > 0 else 0.0
        omega = RELAXATION if ratio > RELAX_TRIGGER else 1.0
        if omega < 1.0:
            state = FlowState(flow, state.v + omega * dv, state.p + omega * (new.p - state.p))
        else:
            state = new
        growth = growth + 1 if ratio > 1.0 else 0
        rep.record(iteration=m, velocity_increment=inc, ratio=ratio, relaxation=omega,
                   div_norm=flow.div_norm(state.u), inner_iterations=srep.iterations)
        if inc <= cfg.tol_velocity * max(1.0, flow.x_norm(state.u)):
            converged = True
            break
        if growth >= GROWTH_LIMIT:
            message = (f"Picard iteration diverging ({GROWTH_LIMIT} consecutive increment growths); "
                       "reduce the loads or the density")
            break
        prev_inc = inc
    else:
        message = f"no convergence after {cfg.max_outer} Picard steps"
    if converged:
        rep.constants["residual"] = problem.residual_norm(state)
    return state, rep.finish(converged, message)


def solve_inertial_dirichlet(problem: InertialProblem, config: SolverConfig | None = None,
                             initial: FlowState | None = None) -> tuple[FlowState, SolverReport]:
    _check_regime(problem, dirichlet=True)
    if not problem.skew:
        raise ConfigError("pure-Dirichlet inertial solves use the skew form")
    return picard_solve(problem, config, initial)


def solve_inertial_mixed(problem: InertialProblem, config: SolverConfig | None = None,
                         initial: FlowState | None = None) -> tuple[FlowState, SolverReport]:
    _check_regime(problem, dirichlet=False)
    if problem.skew:
        raise ConfigError("inertial solves with a traction boundary use the plain form q")
    return picard_solve(problem, config, initial)


def solve_inertial(problem: InertialProblem, config: SolverConfig | None = None,
                   initial: FlowState | None = None) -> tuple[FlowState, SolverReport]:
    if problem.flow.has_traction:
        return solve_inertial_mixed(problem, config, initial)
    return solve_inertial_dirichlet(problem, config, initial)


def newton_inertial(problem: InertialProblem, config: SolverConfig | None = None,
                    initial: FlowState | None = None, raise_on_failure: bool = False):
    """Full Newton on viscous and convective terms; serves as an independent reference."""
    cfg = config or SolverConfig()
    flow = problem.flow
    rep = SolverReport("NEWTON/inertial")
    state = (initial or flow.zero_state()).copy()
    v, p, ell = state.v, state.p, 0.0
    free = flow.free
    nf, npres = len(free), flow.pspace.ndof

    def resid(v, p, ell):
        return mixed_residual(flow, v, p, ell, extra_rhs=-problem.convective_vector(v))

    R = resid(v, p, ell)
    converged = False
    message = ""
    for it in range(cfg.max_outer + 1):
        res = flow.dual_norm(R[:nf])
        div = flow.div_norm(flow.lifting.u + v)
        rep.record(iteration=it, residual=res, div_norm=div)
        if res <= cfg.tol_residual * flow.residual_scale and div <= cfg.tol_divergence:
            converged = True
            break
        if it == cfg.max_outer:
            message = f"no convergence after {cfg.max_outer} Newton steps"
            break
        u = flow.lifting.u + v
        T = flow.ctx.tangent(v) + problem.advection(u) + problem.reaction(u)
        try:
            d = solve_linear(_saddle_matrix(flow, T[free][:, free]), -R, method=cfg.linear_method)
        except SolverFailure as exc:
            message = f"singular Jacobian at Newton step {it}: {exc}"
            break
        dv = np.zeros_like(v)
        dv[free] = d[:nf]
        dp = d[nf:nf + npres]
        dl = d[nf + npres] if flow.needs_pressure_gauge else 0.0
        r0 = float(np.linalg.norm(R))
        step = 1.0
        for _ in range(20):
            cand = resid(v + step * dv, p + step * dp, ell + step * dl)
            if np.all(np.isfinite(cand)) and np.linalg.norm(cand) < r0:
                break
            step *= 0.5
        else:
            message = f"line search failed at Newton step {it}"
            break
        v, p, ell, R = v + step * dv, p + step * dp, ell + step * dl, cand
    out = FlowState(flow, v, p)
    rep.finish(converged, message)
    if raise_on_failure and not converged:
        raise NonConvergence(message, out, rep)
    return out, rep
