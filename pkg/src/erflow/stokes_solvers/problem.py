"""Problem data, configuration and reports shared by the flow solvers."""

from __future__ import annotations

import csv
import enum
import io
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from ..fem_core.assembly import (assemble_body_load, assemble_divergence, assemble_mass, assemble_strain_gram,
                                 assemble_traction_load, strain_vector)
from ..fem_core.linalg import Factorized, solve_linear
from ..fem_core.space import FeSpace
from ..mesh import Mesh2D, TagKind
from ..viscosity.mu import MuFunction
from ..viscosity.operators import FlowContext


class ConfigError(ValueError):
    """Solver configuration violates a precondition."""


class IncompatibleDataError(ValueError):
    """Boundary velocity has net flux on a closed domain."""


class InnerMethod(enum.Enum):
    NEWTON = "NEWTON"
    BIRGER_KACHANOV = "BIRGER_KACHANOV"
    CONTRACTION = "CONTRACTION"
    GRADIENT = "GRADIENT"


@dataclass
class SolverConfig:
    """Iteration parameters.

    ``r`` defaults to the model's upper viscosity bound a2 (or 1), and the
    multiplier steps ``rho_schedule`` to the constant r.
    """

    r: float | None = None
    rho_schedule: Sequence[float] | float | None = None
    t: float | str = "AUTO"
    lambda_schedule: Sequence[float] = ()
    tol_velocity: float = 1e-10
    tol_divergence: float = 1e-10
    tol_residual: float = 1e-10
    max_outer: int = 200
    max_inner: int = 50
    inner_method: InnerMethod | str = InnerMethod.NEWTON
    linear_method: str = "direct"

    def __post_init__(self):
        self.inner_method = InnerMethod(self.inner_method) if isinstance(self.inner_method, str) else self.inner_method
        self.validate()

    def validate(self) -> None:
        if self.r is not None and not self.r > 0:
            raise ConfigError(f"augmentation weight r must be positive, got {self.r!r}")
        if self.rho_schedule is not None:
            rho = np.atleast_1d(np.asarray(self.rho_schedule, dtype=float))
            if rho.size == 0 or np.any(~(rho > 0)):
                raise ConfigError("multiplier steps rho must be positive")
            if self.r is not None and np.max(rho) >= 2.0 * self.r:
                raise ConfigError(f"multiplier step rho = {np.max(rho)!r} must stay below 2r = {2 * self.r!r}")
        lam = np.asarray(self.lambda_schedule, dtype=float)
        if lam.size:
            if np.any(~(lam > 0)):
                raise ConfigError("lambda schedule must be strictly positive")
            if np.any(np.diff(lam) >= 0):
                raise ConfigError("lambda schedule must be strictly decreasing")
        if isinstance(self.t, str):
            if self.t.upper() != "AUTO":
                raise ConfigError(f"contraction step must be a number or AUTO, got {self.t!r}")
        elif not self.t > 0:
            raise ConfigError("contraction step t must be positive")
        for name in ("tol_velocity", "tol_divergence", "tol_residual"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError("iteration limits must be at least 1")

    def resolved_r(self, model) -> float:
        if self.r is not None:
            return float(self.r)
        a2 = getattr(getattr(model, "bounds", None), "a2", None)
        return float(a2) if a2 else 1.0

    def rho(self, m: int, r: float) -> float:
        if self.rho_schedule is None:
            return r
        rho = np.atleast_1d(np.asarray(self.rho_schedule, dtype=float))
        val = float(rho[min(m, len(rho) - 1)])
        if not 0 < val < 2 * r:
            raise ConfigError(f"multiplier step rho = {val!r} outside (0, 2r) with r = {r!r}")
        return val


@dataclass
class SolverReport:
    method: str
    rows: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    converged: bool = False
    message: str = ""
    wall_time: float = 0.0
    _t0: float = field(default_factory=time.perf_counter, repr=False)

    def record(self, **row) -> None:
        self.rows.append(row)

    def finish(self, converged: bool, message: str = "") -> "SolverReport":
        self.converged = converged
        self.message = message
        self.wall_time = time.perf_counter() - self._t0
        return self

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([row.get(name, np.nan) for row in self.rows], dtype=float)

    def to_csv(self) -> str:
        cols = ["iteration", "div_norm", "residual", "p_increment"]
        extra = sorted({k for row in self.rows for k in row} - set(cols))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols + extra)
        for i, row in enumerate(self.rows):
            vals = [row.get("iteration", i)] + [row.get(c, "") for c in cols[1:] + extra]
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in vals])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"method: {self.method}", f"converged: {self.converged}", f"iterations: {self.iterations}",
                 f"wall_time_s: {self.wall_time:.6g}"]
        for k, v in self.constants.items():
            lines.append(f"{k}: {v:.17g}" if isinstance(v, float) else f"{k}: {v}")
        if self.message:
            lines.append(f"message: {self.message}")
        return "\n".join(lines)


@dataclass(frozen=True, eq=False)
class LiftingField:
    u: np.ndarray
    div_norm: float


@dataclass(eq=False)
class FlowState:
    problem: "FlowProblem"
    v: np.ndarray  # velocity minus the lifting, zero on Dirichlet dofs
    p: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return self.problem.lifting.u + self.v

    def velocity_at(self, pts) -> np.ndarray:
        return self.problem.vspace.eval_points(self.u, pts)[0]

    def pressure_at(self, pts) -> np.ndarray:
        return self.problem.pspace.eval_points(self.p, pts)[0][:, 0]

    def invariant_at(self, pts) -> np.ndarray:
        _, g = self.problem.vspace.eval_points(self.u, pts)
        s = strain_vector(g)
        return np.sum(s * s, axis=-1)

    def copy(self) -> "FlowState":
        return FlowState(self.problem, self.v.copy(), self.p.copy())


BoundaryVelocity = Callable[[np.ndarray, np.ndarray], tuple]


class FlowProblem:
    """Discrete flow problem on a mesh.

    Args:
        mesh: tagged mesh (DIRICHLET and optional TRACTION edges).
        model: viscosity model.
        mu_fn: orientation factor parameters.
        E: electric field (see ``FlowContext``).
        boundary_velocity: f(x, y) -> (u1, u2) prescribed on DIRICHLET edges.
        lifting: a ready-made ``LiftingField`` (overrides boundary_velocity).
        body: body force K (constant, f(x, y) or (T, Q, 2) array).
        traction: surface force F(x, y, nx, ny) on TRACTION edges.
        extra_load: additional dual vector (e.g. electric forces).
    """

    def __init__(self, mesh: Mesh2D, model, mu_fn: MuFunction | None = None, E=None,
                 boundary_velocity: BoundaryVelocity | None = None, lifting: LiftingField | None = None,
                 body=None, traction=None, extra_load: np.ndarray | None = None, frozen_mu=None,
                 lifting_tol: float = 1e-10):
        self.mesh = mesh
        self.model = model
        self.mu_fn = mu_fn if mu_fn is not None else MuFunction()
        self.E = E
        self.vspace = FeSpace(mesh, 2, 2)
        self.pspace = FeSpace(mesh, 1, 1, constrained=())
        self.has_traction = mesh.has_traction()
        if lifting is None:
            lifting = build_lifting(self, boundary_velocity, tol=lifting_tol)
        self.lifting = lifting
        self.body = body
        self.traction = traction
        self.load = assemble_body_load(self.vspace, body) + assemble_traction_load(self.vspace, traction)
        if extra_load is not None:
            self.load = self.load + np.asarray(extra_load, dtype=float)
        self.ctx = FlowContext(self.vspace, model, self.mu_fn, lifting.u, E, frozen_mu)

    def with_model(self, model) -> "FlowProblem":
        """Same discrete data with another viscosity model (reusing the lifting)."""
        out = object.__new__(FlowProblem)
        out.__dict__.update({k: v for k, v in self.__dict__.items() if k not in ("ctx", "model")})
        out.model = model
        out.ctx = FlowContext(self.vspace, model, self.mu_fn, self.lifting.u, self.E, self.ctx.frozen_mu)
        return out

    # -- constant matrices --------------------------------------------------
    @cached_property
    def free(self) -> np.ndarray:
        return self.vspace.free_dofs

    @cached_property
    def B(self) -> sp.csr_matrix:
        return assemble_divergence(self.vspace, self.pspace)

    @cached_property
    def B_free(self) -> sp.csr_matrix:
        return self.B[:, self.free].tocsr()

    @cached_property
    def M_p(self) -> sp.csr_matrix:
        return assemble_mass(self.pspace)

    @cached_property
    def M_p_lu(self) -> Factorized:
        return Factorized(self.M_p)

    @cached_property
    def gram(self) -> sp.csr_matrix:
        return assemble_strain_gram(self.vspace)

    @cached_property
    def gram_free_lu(self) -> Factorized:
        return Factorized(self.gram[self.free][:, self.free])

    @cached_property
    def pressure_mean_row(self) -> np.ndarray:
        return np.asarray(self.M_p.sum(axis=0)).ravel()

    @property
    def needs_pressure_gauge(self) -> bool:
        return not self.has_traction

    # -- norms --------------------------------------------------------------
    def div_norm(self, u_total: np.ndarray) -> float:
        """L2 norm of the pressure-space projection of div u."""
        b = self.B @ u_total
        return float(np.sqrt(max(b @ self.M_p_lu.solve(b), 0.0)))

    def dual_norm(self, r_free: np.ndarray) -> float:
        return float(np.sqrt(max(r_free @ self.gram_free_lu.solve(r_free), 0.0)))

    @cached_property
    def residual_scale(self) -> float:
        """max(1, dual norm of the load): residual tolerances are relative to it."""
        return max(1.0, self.dual_norm(self.load[self.free]))

    def pressure_norm(self, p: np.ndarray) -> float:
        return float(np.sqrt(max(p @ (self.M_p @ p), 0.0)))

    def velocity_l2(self, w: np.ndarray) -> float:
        M = self._vmass
        return float(np.sqrt(max(w @ (M @ w), 0.0)))

    @cached_property
    def _vmass(self):
        return assemble_mass(self.vspace)

    def x_norm(self, w: np.ndarray) -> float:
        return float(np.sqrt(max(w @ (self.gram @ w), 0.0)))

    def zero_state(self) -> FlowState:
        return FlowState(self, np.zeros(self.vspace.ndof), np.zeros(self.pspace.ndof))

    def momentum_residual(self, v: np.ndarray, p: np.ndarray, linear_term=None) -> np.ndarray:
        """Free-dof residual of the momentum equation."""
        r = self.ctx.residual(v) - self.B.T @ p - self.load
        if linear_term is not None:
            r = r + linear_term @ (self.lifting.u + v)
        return r[self.free]


def dirichlet_flux(space: FeSpace, u: np.ndarray) -> tuple[float, float]:
    """(net flux, total absolute flux) of u through the DIRICHLET edges."""
    et = space.edge_tabulate(TagKind.DIRICHLET, None, 4)
    if len(et.dofs) == 0:
        return 0.0, 0.0
    n = space.n_scalar
    u1 = np.einsum("qk,ek->eq", et.phi, u[et.dofs])
    u2 = np.einsum("qk,ek->eq", et.phi, u[et.dofs + n])
    un = u1 * et.normals[:, 0, None] + u2 * et.normals[:, 1, None]
    return float(np.sum(et.weights * un)), float(np.sum(et.weights * np.abs(un)))


def build_lifting(problem: FlowProblem, boundary_velocity: BoundaryVelocity | None,
                  tol: float = 1e-10) -> LiftingField:
    """Divergence-free extension of the boundary velocity.

    Solves an auxiliary unit-viscosity Stokes problem with the data on
    DIRICHLET dofs and zero loads; its velocity is the lifting.
    """
    V, P = problem.vspace, problem.pspace
    u = np.zeros(V.ndof)
    if boundary_velocity is None:
        return LiftingField(u, 0.0)
    vals = V.interpolate(lambda x, y: np.asarray(boundary_velocity(x, y), dtype=float))
    fixed = V.dirichlet_dofs
    u[fixed] = vals[fixed]
    if not np.any(u):
        return LiftingField(u, 0.0)
    if not problem.has_traction:
        net, total = dirichlet_flux(V, u)
        if abs(net) > max(tol, 1e-10 * total):
            raise IncompatibleDataError(f"boundary velocity has net flux {net:.6e} through a closed boundary")
    free = V.free_dofs
    G = assemble_strain_gram(V)
    B = assemble_divergence(V, P)
    K = 2.0 * G[free][:, free]
    Bf = B[:, free]
    rhs_v = -(2.0 * G @ u)[free]
    rhs_p = -(B @ u)
    blocks = [[K, -Bf.T], [-Bf, None]]
    rhs = [rhs_v, -rhs_p]
    if not problem.has_traction:
        m = np.asarray(assemble_mass(P).sum(axis=0)).ravel()
        blocks = [[K, -Bf.T, None], [-Bf, None, sp.csr_matrix(m[:, None])], [None, sp.csr_matrix(m[None, :]), None]]
        rhs.append(np.zeros(1))
    A = sp.bmat(blocks, format="csr")
    x = solve_linear(A, np.concatenate(rhs))
    u[free] = x[:len(free)]
    M = assemble_mass(P)
    b = B @ u
    div = float(np.sqrt(max(b @ Factorized(M).solve(b), 0.0)))
    return LiftingField(u, div)
