"""Assembly of the nonlinear viscous operators, their tangents and functionals.

Every operator has the form

    (r(v), h) = 2 * integral of c(I, |E|, mu, x) eps(w) : eps(h),  w = lift + v,

and differs only in the scalar coefficient ``c``. The tangent is the exact
derivative of r with respect to v (the orientation factor included when it
depends on the velocity).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .. import kernels
from ..fem_core.assembly import (coefficient_at, scatter_matrix, scatter_vector, strain_matrix,
                            strain_vector, vector_values)
from ..fem_core.quadrature import NONLINEAR_RULE
from ..fem_core.space import FeSpace, Tabulation
from .models import ModelError, SingularityError, Variant
from .mu import MuFunction, eval_mu_mollified, mu_values


class OperatorKind(enum.Enum):
    L_v = "L_v"
    L = "L"
    L1 = "L1"
    L2 = "L2"
    dJlambda = "dJlambda"
    dY_lambda = "dY_lambda"


class FunctionalKind(enum.Enum):
    J = "J"
    J_lambda = "J_lambda"
    Y = "Y"
    Y_lambda = "Y_lambda"
    Psi = "Psi"


def flow_kinds(model) -> tuple[OperatorKind, ...]:
    """Operators whose sum is the viscous part of the flow equations for ``model``."""
    v = model.variant
    if v is Variant.REGULAR:
        return (OperatorKind.L,)
    if v in (Variant.REGULARIZED_BINGHAM, Variant.SINGULAR_BINGHAM):
        return (OperatorKind.dJlambda, OperatorKind.L)
    if v is Variant.EXTENDED_BINGHAM:
        return (OperatorKind.dJlambda, OperatorKind.L1)
    return (OperatorKind.dY_lambda, OperatorKind.L2)


_ALLOWED = {
    OperatorKind.L_v: (Variant.REGULAR,),
    OperatorKind.L: (Variant.REGULAR, Variant.REGULARIZED_BINGHAM, Variant.SINGULAR_BINGHAM),
    OperatorKind.L1: (Variant.EXTENDED_BINGHAM,),
    OperatorKind.L2: (Variant.GIVEN_MU,),
    OperatorKind.dJlambda: (Variant.REGULARIZED_BINGHAM, Variant.SINGULAR_BINGHAM, Variant.EXTENDED_BINGHAM),
    OperatorKind.dY_lambda: (Variant.GIVEN_MU,),
}


def field_at(E, tab: Tabulation) -> np.ndarray:
    """Electric field (T, Q, 2) at the tabulation's quadrature points."""
    T, Q = tab.wdet.shape
    if E is None:
        return np.zeros((T, Q, 2))
    if hasattr(E, "E_at"):
        return E.E_at(tab)
    if callable(E):
        x = tab.points
        f = E(x[..., 0], x[..., 1])
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), (T, Q)) for c in f], axis=-1)
    return np.broadcast_to(np.asarray(E, dtype=float), (T, Q, 2)).copy()


def field_at_points(E, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if E is None:
        return np.zeros_like(pts)
    if hasattr(E, "E_points"):
        return E.E_points(pts)
    if callable(E):
        f = E(pts[:, 0], pts[:, 1])
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), len(pts)) for c in f], axis=-1)
    E = np.asarray(E, dtype=float)
    if E.shape == (2,):
        return np.broadcast_to(E, pts.shape).copy()
    raise ValueError("mollified orientation needs E as a constant, callable or field object")


@dataclass
class PointState:
    """Quadrature-point data of a velocity state."""

    w: np.ndarray  # (T, Q, 2) velocity lift + v
    s: np.ndarray  # (T, Q, 3) scaled strain
    I: np.ndarray  # (T, Q)
    absE: np.ndarray  # (T, Q)
    mu: np.ndarray  # (T, Q)
    dmu: np.ndarray | None  # (T, Q, 2) d mu / d velocity, None if mu is not differentiated


class FlowContext:
    """Everything fixed during a nonlinear solve: space, model, lifting, field.

    Args:
        space: P2 vector velocity space.
        model: a viscosity model instance.
        mu_fn: orientation-factor parameters (default alpha, no mollifier).
        lifting: full velocity dof vector of the boundary lifting (default 0).
        E: electric field (None, constant, callable, (T, Q, 2) array or an
            object exposing ``E_at(tab)``).
        frozen_mu: orientation factor used by ``L_v`` (scalar, callable or
            (T, Q) array); defaults to the factor of the lifting alone.
    """

    def __init__(self, space: FeSpace, model, mu_fn: MuFunction | None = None, lifting=None,
                 E=None, frozen_mu=None, rule: int = NONLINEAR_RULE):
        if space.components != 2:
            raise ValueError("velocity space must be vector valued")
        self.space = space
        self.model = model
        self.mu_fn = mu_fn if mu_fn is not None else MuFunction()
        self.lifting = np.zeros(space.ndof) if lifting is None else np.asarray(lifting, dtype=float)
        if self.lifting.shape != (space.ndof,):
            raise ValueError("lifting has the wrong length")
        self.E = E
        self.frozen_mu = frozen_mu
        self.tab = space.tabulate(rule)
        self.e_threshold = self.mu_fn.e_threshold

    @cached_property
    def B(self) -> np.ndarray:
        return strain_matrix(self.tab)

    @cached_property
    def N(self) -> np.ndarray:
        return vector_values(self.tab, len(self.space.mesh.triangles))

    @cached_property
    def E_qp(self) -> np.ndarray:
        return field_at(self.E, self.tab)

    @cached_property
    def absE(self) -> np.ndarray:
        return np.sqrt(np.sum(self.E_qp ** 2, axis=-1))

    @cached_property
    def given_mu(self) -> np.ndarray:
        m = self.model.mu_at(self.tab.points)
        return np.where(self.absE < self.e_threshold, 0.0, m)

    @cached_property
    def _frozen(self) -> np.ndarray:
        if self.frozen_mu is None:
            return self.state(np.zeros(self.space.ndof), need_dmu=False).mu
        return np.clip(coefficient_at(self.frozen_mu, self.tab), 0.0, 1.0)

    def velocity(self, v) -> np.ndarray:
        return self.lifting + np.asarray(v, dtype=float)

    def state(self, v, need_dmu: bool = True) -> PointState:
        w_dofs = self.velocity(v)
        vals, grads = self.space.eval_qp(w_dofs, self.tab)
        s = strain_vector(grads)
        I = np.sum(s * s, axis=-1)
        mf = self.mu_fn
        if mf.mollifier is not None:
            T, Q = I.shape
            pts = self.tab.points.reshape(-1, 2)
            mu = eval_mu_mollified(
                mf, lambda p: self.space.eval_points(w_dofs, p)[0],
                lambda p: field_at_points(self.E, p), pts, self.space.mesh).reshape(T, Q)
            dmu = None
        elif need_dmu:
            mu, dmu = mu_values(mf, vals, self.E_qp, with_derivative=True)
        else:
            mu, dmu = mu_values(mf, vals, self.E_qp), None
        mu = np.where(self.absE < self.e_threshold, 0.0, mu)
        if dmu is not None:
            dmu = np.where((self.absE < self.e_threshold)[..., None], 0.0, dmu)
        return PointState(vals, s, I, self.absE, mu, dmu)

    # -- coefficients ------------------------------------------------------
    def coefficient(self, kind: OperatorKind, st: PointState):
        """(c, dc/dI, dc/dmu or None) at quadrature points."""
        model = self.model
        if model.variant not in _ALLOWED[kind]:
            raise ModelError(f"operator {kind.value} is not defined for a {model.variant.value} model")
        I, absE = st.I, st.absE
        if kind is OperatorKind.L_v:
            c, cI, _ = model.eval(I, absE, self._frozen)
            return c, cI, None
        if kind is OperatorKind.L:
            sub = model if model.variant is Variant.REGULAR else model.psi
            return sub.eval(I, absE, st.mu)
        if kind is OperatorKind.L1:
            return (model.plastic.value(absE, st.mu), np.zeros_like(I), model.plastic.dmu(absE, st.mu))
        if kind is OperatorKind.L2:
            c, cI, _ = model.psi1.eval(I, absE, self.given_mu)
            return c, cI, None
        lam = float(model.lam)
        if lam <= 0:
            bad = np.argwhere(I <= 0)
            if len(bad):
                t, q = bad[0]
                raise SingularityError(
                    f"singular yield term at element {t}, quadrature point {q}: I = {I[t, q]!r}")
        root = np.sqrt(lam + I)
        if kind is OperatorKind.dJlambda:
            b = model.yield_coef.value(absE, st.mu)
            bm = model.yield_coef.dmu(absE, st.mu)
            return b / root, -0.5 * b / root ** 3, bm / root
        e = model.yield_coef.value(absE, self.given_mu)
        return e / root, -0.5 * e / root ** 3, None

    # -- assembly ----------------------------------------------------------
    def _ks(self, kinds) -> tuple[OperatorKind, ...]:
        if kinds is None:
            return flow_kinds(self.model)
        if isinstance(kinds, (OperatorKind, str)):
            kinds = (kinds,)
        return tuple(OperatorKind(k) for k in kinds)

    def residual(self, v, kinds=None) -> np.ndarray:
        st = self.state(v, need_dmu=False)
        c = sum(self.coefficient(k, st)[0] for k in self._ks(kinds))
        local = kernels.weighted_apply(self.B, 2.0 * c[..., None] * st.s, self.tab.wdet)
        return scatter_vector(local, self.space.dof_map, self.space.ndof)

    def tangent(self, v, kinds=None) -> sp.csr_matrix:
        st = self.state(v, need_dmu=True)
        c = 0.0
        cI = 0.0
        cmu = None
        for k in self._ks(kinds):
            a, aI, am = self.coefficient(k, st)
            c, cI = c + a, cI + aI
            if am is not None and st.dmu is not None:
                cmu = am if cmu is None else cmu + am
        s = st.s
        D = (2.0 * c)[..., None, None] * np.eye(3) + (4.0 * cI)[..., None, None] * s[..., :, None] * s[..., None, :]
        local = kernels.weighted_gram(self.B, D, self.tab.wdet)
        if cmu is not None and np.any(cmu != 0):
            L = np.einsum("tqkn,tqk->tqn", self.B, (2.0 * cmu)[..., None] * s)
            R = np.einsum("tqdn,tqd->tqn", self.N, st.dmu)
            local = local + kernels.weighted_outer(L, R, self.tab.wdet)
        dm = self.space.dof_map
        return scatter_matrix(local, dm, dm, (self.space.ndof, self.space.ndof))

    def secant_matrix(self, v, kinds=None) -> sp.csr_matrix:
        """Matrix of 2 * integral c(state v) eps(.) : eps(.) with the coefficient frozen."""
        st = self.state(v, need_dmu=False)
        c = sum(self.coefficient(k, st)[0] for k in self._ks(kinds))
        D = (2.0 * c)[..., None, None] * np.eye(3)
        local = kernels.weighted_gram(self.B, np.ascontiguousarray(D), self.tab.wdet)
        dm = self.space.dof_map
        return scatter_matrix(local, dm, dm, (self.space.ndof, self.space.ndof))

    # -- functionals -------------------------------------------------------
    def _I_of(self, h) -> np.ndarray:
        _, grads = self.space.eval_qp(self.velocity(h), self.tab)
        s = strain_vector(grads)
        return np.sum(s * s, axis=-1)

    def functional(self, kind: FunctionalKind | str, v, h, lam: float | None = None, coefficient=None) -> float:
        """Yield functionals with the orientation taken from ``v`` and the strain from ``h``."""
        kind = FunctionalKind(kind)
        wdet = self.tab.wdet
        if kind is FunctionalKind.Psi:
            # strain of h without the lifting
            _, grads = self.space.eval_qp(np.asarray(h, dtype=float), self.tab)
            s = strain_vector(grads)
            coef = coefficient_at(1.0 if coefficient is None else coefficient, self.tab)
            return float(np.sum(wdet * coef * np.sqrt(np.sum(s * s, axis=-1))))
        model = self.model
        I = self._I_of(h)
        if kind in (FunctionalKind.J, FunctionalKind.J_lambda):
            if model.variant not in _ALLOWED[OperatorKind.dJlambda]:
                raise ModelError("J needs a model with a yield coefficient")
            st = self.state(v, need_dmu=False)
            b = model.yield_coef.value(st.absE, st.mu)
        else:
            if model.variant is not Variant.GIVEN_MU:
                raise ModelError("Y needs a GIVEN_MU model")
            b = model.yield_coef.value(self.absE, self.given_mu)
        if kind in (FunctionalKind.J, FunctionalKind.Y):
            lam_eff = 0.0
        else:
            lam_eff = float(model.lam if lam is None else lam)
        return float(2.0 * np.sum(wdet * b * np.sqrt(lam_eff + I)))

    def energy(self, v, load: np.ndarray | None = None) -> float:
        """Integral of the viscous potential minus the load pairing.

        The orientation factor is held at its value for ``v`` (exact for
        GIVEN_MU models, a frozen-orientation potential otherwise).
        """
        st = self.state(v, need_dmu=False)
        dens = potential_density(self.model, st.I, st.absE,
                                 self.given_mu if self.model.variant is Variant.GIVEN_MU else st.mu)
        val = float(np.sum(self.tab.wdet * dens))
        if load is not None:
            val -= float(np.asarray(load) @ np.asarray(v, dtype=float))
        return val


def potential_density(model, I, absE, mu) -> np.ndarray:
    """Integral of the viscosity over the invariant from 0 to I."""
    v = model.variant
    if v is Variant.REGULAR:
        return model.integral(I, absE, mu)
    lam = float(model.lam)
    b = model.yield_coef.value(absE, mu)
    yld = 2.0 * b * (np.sqrt(lam + I) - np.sqrt(lam))
    if v is Variant.EXTENDED_BINGHAM:
        return yld + model.plastic.value(absE, mu) * I
    if v is Variant.GIVEN_MU:
        return yld + model.psi1.integral(I, absE, mu)
    return yld + model.psi.integral(I, absE, mu)


def assemble_nonlinear_operator(kind, ctx: FlowContext, v) -> np.ndarray:
    """Residual vector (r)_k = (operator(v), h_k) over all velocity dofs."""
    return ctx.residual(v, kind)


def assemble_tangent(kind, ctx: FlowContext, v) -> sp.csr_matrix:
    return ctx.tangent(v, kind)


def eval_functional(kind, ctx: FlowContext, v, h, **kw) -> float:
    return ctx.functional(kind, v, h, **kw)


def finite_difference_check(ctx: FlowContext, v, directions: Iterable[np.ndarray], kinds=None,
                            delta: float = 1e-6) -> float:
    """Worst relative mismatch between the tangent and central differences of the residual."""
    T = ctx.tangent(v, kinds)
    worst = 0.0
    for w in directions:
        fd = (ctx.residual(v + delta * w, kinds) - ctx.residual(v - delta * w, kinds)) / (2 * delta)
        Tw = T @ w
        worst = max(worst, float(np.linalg.norm(fd - Tw) / max(np.linalg.norm(Tw), 1e-300)))
    return worst

