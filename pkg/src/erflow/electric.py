"""Quasi-static electric potential and the forces it exerts on the fluid.

The potential is a P2 function equal to the electrode voltage on each
ELECTRODE(i) boundary, zero on grounded boundaries, with a natural (zero
flux) condition elsewhere. Forces follow the dielectric stress tensor in
Gaussian units by default, SI on request.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Mapping

import numpy as np

from . import kernels
from .fem_core.assembly import (InvalidCoefficient, assemble_mass, assemble_scalar_load,
                           assemble_scalar_stiffness, assemble_traction_load, coefficient_at,
                           scatter_vector, vector_values)
from .fem_core.linalg import solve_linear
from .fem_core.quadrature import LINEAR_RULE
from .fem_core.space import FeSpace, Tabulation
from .mesh import Mesh2D, TagKind

EPSILON_0 = 8.8541878128e-12


class ElectricConfigError(ValueError):
    """Electrodes or voltages are inconsistent with the mesh."""


def _coef_fn(coef):
    """Uniform callable view of a scalar or f(x, y) coefficient."""
    if callable(coef):
        return lambda x, y: np.broadcast_to(np.asarray(coef(x, y), dtype=float), np.shape(x))
    c = float(coef)
    return lambda x, y: np.full(np.shape(x), c)


class ElectricState:
    """Solved potential with field evaluation helpers."""

    def __init__(self, space: FeSpace, theta: np.ndarray, permittivity, voltages: Mapping[int, float],
                 lift: np.ndarray, residual: float):
        self.space = space
        self.mesh = space.mesh
        self.theta = theta
        self.permittivity = permittivity
        self.voltages = dict(voltages)
        self.lift = lift
        self.residual = residual

    @property
    def eps_fn(self):
        return _coef_fn(self.permittivity)

    def E_at(self, tab: Tabulation) -> np.ndarray:
        """E = -grad theta at the quadrature points of ``tab`` (any space on this mesh)."""
        own = self.space.tabulate(tab.rule)
        _, grads = self.space.eval_qp(self.theta, own)
        return -grads[:, :, 0, :]

    def E_points(self, pts: np.ndarray) -> np.ndarray:
        _, grads = self.space.eval_points(self.theta, pts)
        return -grads[:, 0, :]

    def theta_points(self, pts: np.ndarray) -> np.ndarray:
        return self.space.eval_points(self.theta, pts)[0][:, 0]

    @cached_property
    def stiffness(self):
        return assemble_scalar_stiffness(self.space, self.permittivity)

    def energy(self) -> float:
        """a(theta, theta) = integral of eps |grad theta|^2."""
        return float(self.theta @ (self.stiffness @ self.theta))

    def grad_norm_sq(self) -> float:
        tab = self.space.tabulate(LINEAR_RULE)
        E = self.E_at(tab)
        return float(np.sum(tab.wdet * np.sum(E * E, axis=-1)))

    def flux(self, kind: TagKind, index: int | None = None) -> float:
        """Discrete flux integral of eps d theta/d nu through the tagged boundary.

        Computed from the reaction of the assembled system, which is the
        flux that the discrete solution actually conserves.
        """
        dofs = self.space.scalar_dofs_on(kind, index)
        if len(dofs) == 0:
            return 0.0
        reaction = self.stiffness @ self.theta
        return float(np.sum(reaction[dofs]))

    def total_electrode_flux(self) -> tuple[float, float]:
        """(sum of fluxes over all electrode boundaries, sum of their magnitudes)."""
        reaction = self.stiffness @ self.theta
        dofs = np.unique(np.concatenate([self.space.scalar_dofs_on(TagKind.ELECTRODE),
                                         self.space.scalar_dofs_on(TagKind.ELECTRODE_GROUND)]))
        return float(np.sum(reaction[dofs])), float(np.sum(np.abs(reaction[dofs])))


def electrode_lift(space: FeSpace, voltages: Mapping[int, float]) -> np.ndarray:
    """Voltage on electrode dofs, zero elsewhere."""
    lift = np.zeros(space.n_scalar)
    owner = np.full(space.n_scalar, np.nan)
    for dof in space.scalar_dofs_on(TagKind.ELECTRODE_GROUND):
        owner[dof] = 0.0
    for i, U in voltages.items():
        for dof in space.scalar_dofs_on(TagKind.ELECTRODE, i):
            if not np.isnan(owner[dof]) and owner[dof] != U:
                x, y = space.dof_coords[dof]
                raise ElectricConfigError(
                    f"dof at ({x:.6g}, {y:.6g}) belongs to electrodes with different voltages")
            owner[dof] = U
            lift[dof] = U
    return lift


def solve_potential(mesh: Mesh2D, permittivity=1.0, voltages: Mapping[int, float] | None = None,
                    e_min: float | None = None, lift: np.ndarray | None = None,
                    method: str = "direct") -> ElectricState:
    """Find theta = lift + u with u = 0 on electrodes and a(theta, h) = 0 for admissible h.

    ``lift`` may be any P2 vector carrying the electrode values; the default
    sets electrode dofs only. ``e_min`` is the lower permittivity bound.
    """
    voltages = dict(voltages or {})
    present = mesh.electrode_indices()
    if not present:
        raise ElectricConfigError("mesh has no ELECTRODE boundaries")
    if not mesh.edges_with(TagKind.ELECTRODE_GROUND):
        raise ElectricConfigError("mesh has no ELECTRODE_GROUND boundary")
    unknown = set(voltages) - present
    if unknown:
        raise ElectricConfigError(f"voltages given for electrodes {sorted(unknown)} not present in the mesh "
                                  f"(mesh has {sorted(present)})")
    missing = present - set(voltages)
    if missing:
        raise ElectricConfigError(f"no voltage for electrodes {sorted(missing)}")
    space = FeSpace(mesh, 2, 1, constrained=(TagKind.ELECTRODE, TagKind.ELECTRODE_GROUND))
    tab = space.tabulate(LINEAR_RULE)
    eps = coefficient_at(permittivity, tab)
    lower = 0.0 if e_min is None else float(e_min)
    if np.any(~(eps > lower)) or (e_min is not None and np.any(eps < e_min)):
        t, q = np.unravel_index(int(np.argmin(eps)), eps.shape)
        raise InvalidCoefficient(f"permittivity {eps[t, q]!r} below its lower bound {lower!r} at element {t}")
    A = assemble_scalar_stiffness(space, permittivity)
    base = electrode_lift(space, voltages)
    fixed = space.constrained_scalar_dofs
    if lift is None:
        lift = base
    else:
        lift = np.asarray(lift, dtype=float).copy()
        if lift.shape != base.shape or np.max(np.abs(lift[fixed] - base[fixed]), initial=0.0) > 0:
            raise ElectricConfigError("lift must match the electrode values on constrained dofs")
    free = np.setdiff1d(np.arange(space.n_scalar), fixed)
    rhs = -(A @ lift)
    theta = lift.copy()
    res = 0.0
    if len(free):
        Aff = A[free][:, free]
        u = solve_linear(Aff, rhs[free], method=method, tol=1e-14)
        theta[free] += u
        bn = np.linalg.norm(rhs[free])
        res = float(np.linalg.norm(Aff @ u - rhs[free]) / bn) if bn > 0 else 0.0
    return ElectricState(space, theta, permittivity, voltages, lift, res)


def compute_E(state: ElectricState, rule: int = LINEAR_RULE) -> np.ndarray:
    return state.E_at(state.space.tabulate(rule))


@dataclass(frozen=True)
class ElectricForces:
    """Dielectric stress and the volume/surface forces derived from it.

    Args:
        state: solved potential.
        density: fluid density (scalar or f(x, y)).
        deps_drho: derivative of the permittivity with respect to density.
        si_units: use eps0-scaled SI factors instead of 1/(8 pi), 1/(4 pi).
    """

    state: ElectricState
    density: object = 1.0
    deps_drho: object = 0.0
    si_units: bool = False

    @property
    def factors(self) -> tuple[float, float]:
        if self.si_units:
            return 0.5 * EPSILON_0, EPSILON_0
        return 1.0 / (8.0 * np.pi), 1.0 / (4.0 * np.pi)

    def _sigma(self, x: np.ndarray, E: np.ndarray) -> np.ndarray:
        half, full = self.factors
        eps = self.state.eps_fn(x[..., 0], x[..., 1])
        rho = _coef_fn(self.density)(x[..., 0], x[..., 1])
        de = _coef_fn(self.deps_drho)(x[..., 0], x[..., 1])
        E2 = np.sum(E * E, axis=-1)
        iso = -half * E2 * (eps - rho * de)
        sigma = full * eps[..., None, None] * E[..., :, None] * E[..., None, :]
        sigma[..., 0, 0] += iso
        sigma[..., 1, 1] += iso
        return sigma

    def sigma_at(self, tab: Tabulation) -> np.ndarray:
        """(T, Q, 2, 2) stress at quadrature points."""
        return self._sigma(tab.points, self.state.E_at(tab))

    @cached_property
    def _p1(self) -> FeSpace:
        return FeSpace(self.state.mesh, 1, 1, constrained=())

    def _project_p1(self, values_at_qp: np.ndarray) -> np.ndarray:
        sp1 = self._p1
        M = assemble_mass(sp1)
        b = assemble_scalar_load(sp1, values_at_qp)
        return solve_linear(M, b)

    def _grad_p1(self, coeffs: np.ndarray, tab: Tabulation) -> np.ndarray:
        sp1 = self._p1
        own = sp1.tabulate(tab.rule)
        _, g = sp1.eval_qp(coeffs, own)
        return g[:, :, 0, :]

    def K_e_at(self, tab: Tabulation) -> np.ndarray:
        """Volume force (T, Q, 2) from the expanded form.

        The permittivity and |E|^2 rho d eps/d rho are projected onto P1 and
        differentiated there.
        """
        half, _ = self.factors
        sp1 = self._p1
        ptab = sp1.tabulate(LINEAR_RULE)
        x = ptab.points
        E_p = self.state.E_at(ptab)
        E2_p = np.sum(E_p * E_p, axis=-1)
        eps_p = self.state.eps_fn(x[..., 0], x[..., 1])
        g_p = E2_p * _coef_fn(self.density)(x[..., 0], x[..., 1]) * _coef_fn(self.deps_drho)(x[..., 0], x[..., 1])
        E = self.state.E_at(tab)
        E2 = np.sum(E * E, axis=-1)
        out = np.zeros(tab.points.shape)
        if np.ptp(eps_p) > 0:
            out += -half * E2[..., None] * self._grad_p1(self._project_p1(eps_p), tab)
        if np.any(g_p != 0):
            out += half * self._grad_p1(self._project_p1(g_p), tab)
        return out

    def traction_at(self, velocity_space: FeSpace, kind: TagKind = TagKind.TRACTION, n_points: int = 4) -> np.ndarray:
        """F_e = sigma . nu at the Gauss points of the tagged edges, shape (nE, nq, 2)."""
        et = velocity_space.edge_tabulate(kind, None, n_points)
        if len(et.dofs) == 0:
            return np.zeros((0, n_points, 2))
        pts = et.points.reshape(-1, 2)
        # pull the evaluation points slightly inside the owning triangle
        cent = self.state.mesh.nodes[self.state.mesh.triangles[et.triangles]].mean(axis=1)
        inner = pts + 1e-12 * (np.repeat(cent, et.points.shape[1], axis=0) - pts)
        E = self.state.E_points(inner)
        sig = self._sigma(pts, E).reshape(et.points.shape[:2] + (2, 2))
        return np.einsum("eqik,ek->eqi", sig, et.normals)

    def body_load(self, velocity_space: FeSpace, weak: bool = False) -> np.ndarray:
        """Load vector of (K_e, h) for every velocity basis function.

        With ``weak`` the volume force is taken in divergence form,
        -(sigma, grad h) plus the boundary term on traction edges, which
        avoids differentiating the field.
        """
        tab = velocity_space.tabulate(LINEAR_RULE)
        T = len(velocity_space.mesh.triangles)
        if not weak:
            K = self.K_e_at(tab)
            N = vector_values(tab, T)
            return scatter_vector(kernels.weighted_apply(N, K, tab.wdet), velocity_space.dof_map, velocity_space.ndof)
        sig = self.sigma_at(tab)
        g = tab.grads  # (T, Q, n, 2)
        n = g.shape[2]
        local = np.zeros((T, 2 * n))
        for i in range(2):
            local[:, i * n:(i + 1) * n] = -np.einsum("tq,tqd,tqnd->tn", tab.wdet, sig[:, :, i, :], g)
        out = scatter_vector(local, velocity_space.dof_map, velocity_space.ndof)
        return out + assemble_traction_load(velocity_space, self.traction_at(velocity_space))

    def traction_load(self, velocity_space: FeSpace) -> np.ndarray:
        return assemble_traction_load(velocity_space, self.traction_at(velocity_space))


def compute_electric_forces(state: ElectricState, density=1.0, deps_drho=0.0, si_units: bool = False) -> ElectricForces:
    return ElectricForces(state, density, deps_drho, si_units)
