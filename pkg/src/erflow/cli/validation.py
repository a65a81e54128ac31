"""Acceptance checks, grouped into validation suites.

Every check returns a ``CheckResult`` holding the measured quantities next
to the thresholds it was judged against, so callers can re-assert them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy

from ..electric import solve_potential
from ..fem_core.infsup import estimate_discrete_infsup
from ..fem_core.space import FeSpace
from ..inertial_solvers import InertialProblem, advection_matrix, solve_inertial
from ..mesh import DIRICHLET, TRACTION, build_rectangle_mesh, electrode, ground, rectangle_tagging
from ..stokes_solvers import (BinghamChannel, FlowProblem, SolverConfig, augmented_lagrangian_solve,
                              bingham_channel_oracle, contraction_constants, contraction_solve,
                              lambda_continuation, plug_half_width, solve_mixed)
from ..stokes_solvers.augmented import _newton_inner
from ..viscosity import (ConstantField, ExtendedBingham, GivenMu, MuFunction, OperatorKind, RegularizedBingham,
                         SaturatingField, acceptance_model, constant_model, eval_mu)
from ..viscosity.operators import FlowContext, finite_difference_check


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""
    runtime: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} [{self.number:2d}] {self.name}: {self.detail} ({self.runtime:.1f} s)"


def _timed(number: int, name: str):
    def wrap(fn):
        def run(seed: int = 42) -> CheckResult:
            t = time.perf_counter()
            passed, measured, detail = fn(seed)
            return CheckResult(number, name, bool(passed), measured, detail, time.perf_counter() - t)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.number = number
        return run
    return wrap


# -- shared scenarios -------------------------------------------------------

UNIFORM_FIELD = (1.0, 0.5)


def operator_problem(nx: int = 2, model=None) -> FlowProblem:
    mesh = build_rectangle_mesh(1.0, 1.0, nx, nx)
    return FlowProblem(mesh, model or acceptance_model(), E=UNIFORM_FIELD)


def given_mu_channel(nx: int = 16, ny: int = 8) -> FlowProblem:
    """Channel with a prescribed-orientation Bingham-type law (smooth part satisfies C1)."""
    psi1 = acceptance_model()
    model = GivenMu(ConstantField(0.1), psi1, lambda x, y: 0.5 + 0.25 * np.sin(np.pi * x), 0.01,
                    bounds=psi1.bounds)
    return BinghamChannel(G=2.0, tau0=0.5).problem(nx, ny, model=model, E=(0.0, 1.0))


def _random_pairs(problem: FlowProblem, count: int, rng):
    nfree = len(problem.free)
    for _ in range(count):
        u = np.zeros(problem.vspace.ndof)
        w = np.zeros(problem.vspace.ndof)
        # magnitudes spread over decades to probe small and large invariants
        u[problem.free] = rng.standard_normal(nfree) * 10.0 ** rng.uniform(-2, 2)
        w[problem.free] = rng.standard_normal(nfree) * 10.0 ** rng.uniform(-2, 2)
        yield u, w


# -- operators --------------------------------------------------------------

@_timed(1, "operator monotonicity")
def check_monotonicity(seed: int):
    prob = operator_problem()
    b = prob.model.bounds
    mu1 = min(2 * b.a1, 2 * b.a3)
    worst = np.inf
    for u, w in _random_pairs(prob, 50, np.random.default_rng(seed)):
        d = prob.ctx.residual(u, OperatorKind.L_v) - prob.ctx.residual(w, OperatorKind.L_v)
        e = u - w
        worst = min(worst, float(d @ e) - mu1 * prob.x_norm(e) ** 2)
    return worst >= -1e-10, dict(worst_margin=worst, mu1=mu1), f"min (L(u)-L(w),u-w) - {mu1:g}|u-w|^2 = {worst:.3e}"


@_timed(2, "operator Lipschitz bound")
def check_lipschitz(seed: int):
    prob = operator_problem()
    b = prob.model.bounds
    mu2 = 2 * b.a2 + 4 * b.a4
    worst = 0.0
    for u, w in _random_pairs(prob, 50, np.random.default_rng(seed)):
        d = prob.ctx.residual(u, OperatorKind.L_v) - prob.ctx.residual(w, OperatorKind.L_v)
        worst = max(worst, prob.dual_norm(d[prob.free]) / prob.x_norm(u - w))
    return worst <= mu2 + 1e-8, dict(max_ratio=worst, mu2=mu2), f"max dual ratio {worst:.6f} vs bound {mu2:g}"


def _fd_models():
    psi = acceptance_model()
    yield_coef = SaturatingField(0.2, 0.3, 1.0, 1.0)
    return {
        "REGULAR": psi,
        "REGULARIZED_BINGHAM": RegularizedBingham(yield_coef, psi, 0.1),
        "EXTENDED_BINGHAM": ExtendedBingham(yield_coef, SaturatingField(1.0, 0.5, 1.0, 1.0), 0.1),
        "GIVEN_MU": GivenMu(yield_coef, psi, lambda x, y: 0.5 + 0.4 * np.sin(x + y), 0.1),
    }


@_timed(3, "Gateaux consistency")
def check_gateaux(seed: int):
    rng = np.random.default_rng(seed)
    mesh = build_rectangle_mesh(1.0, 1.0, 2, 2, tagging=rectangle_tagging(right=TRACTION))
    mu_fn = MuFunction(alpha=0.05)
    worst = {}
    for name, model in _fd_models().items():
        space = FeSpace(mesh, 2, 2)
        ctx = FlowContext(space, model, mu_fn, E=UNIFORM_FIELD)
        free = space.free_dofs
        errs = []
        for _ in range(10):
            v = np.zeros(space.ndof)
            v[free] = rng.standard_normal(len(free))
            dirs = []
            for _ in range(3):
                d = np.zeros(space.ndof)
                d[free] = rng.standard_normal(len(free))
                dirs.append(d)
            errs.append(finite_difference_check(ctx, v, dirs, delta=1e-6))
            if name != "REGULAR":
                kind = "Y_lambda" if name == "GIVEN_MU" else "J_lambda"
                op = OperatorKind.dY_lambda if name == "GIVEN_MU" else OperatorKind.dJlambda
                g = ctx.residual(v, op)
                for d in dirs:
                    h = 1e-6
                    fd = (ctx.functional(kind, v, v + h * d) - ctx.functional(kind, v, v - h * d)) / (2 * h)
                    errs.append(abs(fd - g @ d) / max(abs(g @ d), 1e-300))
        worst[name] = max(errs)
    top = max(worst.values())
    return top <= 1e-5, dict(worst=worst, max_error=top), f"max relative FD mismatch {top:.2e}"


@_timed(12, "orientation factor battery")
def check_mu_battery(seed: int):
    exact = MuFunction(alpha=0.0)
    vals = {
        "orthogonal": (eval_mu(exact, (1.0, 0.0), (0.0, 2.0)), 0.0),
        "parallel": (eval_mu(exact, (3.0, 0.0), (1.5, 0.0)), 1.0),
        "diagonal": (eval_mu(exact, (1.0, 1.0), (1.0, 0.0)), 0.5),
        "zero_velocity": (eval_mu(MuFunction(alpha=1e-3), (0.0, 0.0), (1.0, 0.0)), 0.5),
    }
    err = max(abs(a - b) for a, b in vals.values())
    return err <= 1e-14, dict(values={k: v[0] for k, v in vals.items()}, max_error=err), f"max error {err:.1e}"


# -- inf-sup ----------------------------------------------------------------

@_timed(4, "discrete inf-sup")
def check_infsup(seed: int):
    th, p1 = [], []
    spurious = []
    for n in (8, 16, 32):
        mesh = build_rectangle_mesh(1.0, 1.0, n, n)
        pres = FeSpace(mesh, 1, 1, constrained=())
        th.append(estimate_discrete_infsup(FeSpace(mesh, 2, 2), pres).beta)
        r = estimate_discrete_infsup(FeSpace(mesh, 1, 2), pres)
        p1.append(r.beta)
        spurious.append(r.spurious_modes)
    th = np.array(th)
    variation = float((th.max() - th.min()) / th.max())
    control = all(s > 0 or bt >= 2 * bp for s, bt, bp in zip(spurious, th, p1))
    ok = variation < 0.10 and th.min() > 0.1 and control
    return ok, dict(beta_taylor_hood=th.tolist(), beta_p1p1=p1, spurious_p1p1=spurious, variation=variation), \
        f"TH beta {np.round(th, 4).tolist()} (variation {variation:.1%}); P1/P1 beta {np.round(p1, 4).tolist()}, " \
        f"spurious modes {spurious}"


# -- exact solutions --------------------------------------------------------

def _plate_mesh(n: int):
    tags = rectangle_tagging(left=DIRICHLET, right=DIRICHLET, bottom=(DIRICHLET, ground(1)),
                             top=(DIRICHLET, electrode(1)))
    return build_rectangle_mesh(1.0, 1.0, n, n, tagging=tags)


@_timed(5, "electric potential")
def check_electric(seed: int):
    mesh = _plate_mesh(4)
    st = solve_potential(mesh, 1.0, {1: 1.0})
    y = st.space.dof_coords[:, 1]
    plate = float(np.max(np.abs(st.theta - y)))
    layered = solve_potential(mesh, lambda x, yy: np.where(yy < 0.5, 1.0, 2.0), {1: 1.0})
    mid = np.abs(layered.space.dof_coords[:, 1] - 0.5) < 1e-12
    iface = float(np.max(np.abs(layered.theta[mid] - 2.0 / 3.0)))
    ok = plate <= 1e-10 and iface <= 1e-9
    return ok, dict(plate_error=plate, interface_error=iface), \
        f"parallel plate error {plate:.1e}; interface value error {iface:.1e}"


def manufactured_data(nu: float = 1.0):
    """Divergence-free velocity from a stream function plus a smooth pressure; returns callables."""
    x, y = sympy.symbols("x y")
    psi = sympy.sin(sympy.pi * x) ** 2 * sympy.sin(sympy.pi * y) ** 2
    u = sympy.Matrix([sympy.diff(psi, y), -sympy.diff(psi, x)])
    p = sympy.cos(sympy.pi * x) * sympy.cos(sympy.pi * y)
    grad = u.jacobian([x, y])
    eps = (grad + grad.T) / 2
    div_sigma = sympy.Matrix([sum(sympy.diff(2 * nu * eps[i, j], [x, y][j]) for j in range(2)) for i in range(2)])
    force = -div_sigma + sympy.Matrix([sympy.diff(p, x), sympy.diff(p, y)])
    lam = lambda e: sympy.lambdify((x, y), e, "numpy")
    fu = [lam(c) for c in u]
    ff = [lam(sympy.simplify(c)) for c in force]
    fp = lam(p)

    def bc(a, b):
        return tuple(np.broadcast_to(f(a, b), np.shape(a)) for f in fu)

    def body(a, b):
        return tuple(np.broadcast_to(f(a, b), np.shape(a)) for f in ff)

    return bc, body, (lambda a, b: np.broadcast_to(fp(a, b), np.shape(a)))


def l2_errors(state, exact_u, exact_p, rule: int = 6) -> tuple[float, float]:
    prob = state.problem
    tab = prob.vspace.tabulate(rule)
    uh, _ = prob.vspace.eval_qp(state.u, tab)
    ph, _ = prob.pspace.eval_qp(state.p, prob.pspace.tabulate(rule))
    X, Y = tab.points[..., 0], tab.points[..., 1]
    ue = np.stack(exact_u(X, Y), axis=-1)
    pe = exact_p(X, Y)
    eu = np.sqrt(np.sum(tab.wdet * np.sum((uh - ue) ** 2, axis=-1)))
    ep = np.sqrt(np.sum(tab.wdet * (ph[..., 0] - pe) ** 2))
    return float(eu), float(ep)


@_timed(6, "manufactured Stokes")
def check_manufactured(seed: int):
    nu = 0.7
    tags = rectangle_tagging(right=TRACTION)
    mesh = build_rectangle_mesh(2.0, 1.0, 8, 4, tagging=tags)
    prob = FlowProblem(mesh, constant_model(nu), boundary_velocity=lambda x, y: (4 * y * (1 - y), 0 * x),
                       traction=lambda x, y, nx, ny: (0 * x, nu * (4 - 8 * y) * nx))
    st, _ = solve_mixed(prob)
    d = prob.vspace.dof_coords
    n = prob.vspace.n_scalar
    verr = float(max(np.max(np.abs(st.u[:n] - 4 * d[:, 1] * (1 - d[:, 1]))), np.max(np.abs(st.u[n:]))))
    pc = prob.pspace.dof_coords
    perr = float(np.max(np.abs(st.p - 8 * nu * (2 - pc[:, 0]))))
    bc, body, pex = manufactured_data(1.0)
    eu, ep = [], []
    for k in (4, 8, 16, 32):
        m = build_rectangle_mesh(1.0, 1.0, k, k)
        pr = FlowProblem(m, constant_model(1.0), boundary_velocity=bc, body=body)
        s, _ = solve_mixed(pr)
        a, b = l2_errors(s, bc, pex)
        eu.append(a)
        ep.append(b)
    ru = np.log2(np.array(eu[:-1]) / np.array(eu[1:]))
    rp = np.log2(np.array(ep[:-1]) / np.array(ep[1:]))
    ok = verr <= 1e-9 and perr <= 1e-9 and ru.min() >= 2.7 and rp.min() >= 1.7
    return ok, dict(poiseuille_velocity=verr, poiseuille_pressure=perr, velocity_errors=eu, pressure_errors=ep,
                    velocity_rates=ru.tolist(), pressure_rates=rp.tolist()), \
        f"Poiseuille errors {verr:.1e}/{perr:.1e}; rates u {np.round(ru, 2).tolist()} p {np.round(rp, 2).tolist()}"


# -- yield-stress flow ------------------------------------------------------

ACCEPTANCE_CHANNEL = BinghamChannel()
CHANNEL_SCHEDULE = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def channel_continuation(schedule=CHANNEL_SCHEDULE, nx: int = 32, ny: int = 16, channel=ACCEPTANCE_CHANNEL):
    prob = channel.problem(nx, ny, schedule[0])
    return lambda_continuation(prob, schedule, family=channel.model, config=SolverConfig(max_outer=100))


@_timed(7, "Bingham channel vs 1D oracle")
def check_bingham(seed: int):
    ch = ACCEPTANCE_CHANNEL
    states, rep = channel_continuation()
    if not rep.converged:
        return False, {}, rep.message
    st = states[-1]
    lam = CHANNEL_SCHEDULE[-1]
    y = np.linspace(0.0, ch.height, 801)
    _, U = bingham_channel_oracle(ch, lam, y)
    Uh = st.velocity_at(np.column_stack([np.full_like(y, 0.5 * ch.length), y]))[:, 0]
    rel = float(np.sqrt(np.trapezoid((Uh - U) ** 2, y) / np.trapezoid(U ** 2, y)))
    half = plug_half_width(st, ch, 10.0 * lam)
    herr = abs(half - ch.plug_half_width) / ch.plug_half_width
    ok = rel <= 0.02 and herr <= 0.10
    return ok, dict(profile_error=rel, plug_half_width=half, expected=ch.plug_half_width, width_error=herr), \
        f"profile L2 error {rel:.2e}; plug half-width {half:.4f} vs {ch.plug_half_width:.4f} ({herr:.1%})"


@_timed(10, "lambda continuation")
def check_continuation(seed: int):
    sched = CHANNEL_SCHEDULE[:4]
    states, rep = channel_continuation(sched)
    if not rep.converged:
        return False, {}, rep.message
    d = rep.column("diff_l2")[1:]
    rel = rep.column("relative_diff")[1:]
    ok = bool(np.all(np.diff(d) < 0)) and rel[-1] < 1e-3
    return ok, dict(differences=d.tolist(), relative=rel.tolist()), \
        f"differences {[f'{v:.2e}' for v in d]}; final relative {rel[-1]:.2e}"


# -- iterative solvers ------------------------------------------------------

def tight_reference(problem):
    return solve_mixed(problem, SolverConfig(tol_residual=1e-13, tol_divergence=1e-13, max_outer=100))[0]


@_timed(8, "augmented Lagrangian")
def check_augmented(seed: int):
    prob = given_mu_channel()
    ref = tight_reference(prob)
    st, rep = augmented_lagrangian_solve(prob, SolverConfig(tol_divergence=1e-9, max_outer=200), reference=ref)
    div = rep.column("div_norm")
    perr = rep.column("p_error")
    dec = bool(np.all(np.diff(div) < 0))
    mono = bool(np.all(np.diff(perr) <= 1e-10))
    ok = rep.converged and dec and mono and div[-1] < 1e-8 and rep.iterations <= 200
    return ok, dict(iterations=rep.iterations, final_div=float(div[-1]), div_decreasing=dec,
                    p_error_nonincreasing=mono, final_p_error=float(perr[-1])), \
        f"{rep.iterations} outer iterations, final div {div[-1]:.2e}, div strictly decreasing {dec}, " \
        f"|p-p*| nonincreasing {mono}"


@_timed(9, "contraction rate")
def check_contraction(seed: int):
    c = contraction_constants(1, 2, 1, 0.5, 1, 1.0, 1.0, 1.0, 0.0, 0.0)
    closed = abs(c.k0 - np.sqrt(0.96))
    prob = given_mu_channel()
    ref = tight_reference(prob)
    r = 2.0
    vstar, res, _ = _newton_inner(prob, ref.v.copy(), ref.p, r, 1e-13 * prob.residual_scale, 50, "direct")
    v, rep = contraction_solve(prob, r, p=ref.p, reference=vstar, max_iter=300, tol=1e-14)
    k = rep.constants["k_t"]
    ratios = rep.column("ratio")[1:]
    err = rep.column("error")
    # a priori bound |v_m - v*| <= k^m / (1 - k) |v_1 - v_0|
    bound = k ** np.arange(1, len(err) + 1) / (1 - k) * rep.rows[0]["increment"]
    ok = closed <= 1e-12 and float(ratios.max()) <= k + 0.02 and bool(np.all(err <= bound * (1 + 1e-12)))
    return ok, dict(closed_form_error=closed, k_t0=k, max_ratio=float(ratios.max()), q1=c.q1, q3=c.q3), \
        f"closed form k0 error {closed:.1e}; max ratio {ratios.max():.5f} vs k(t0) {k:.5f}"


# -- inertia ----------------------------------------------------------------

def inflow_channel():
    tags = rectangle_tagging(left=DIRICHLET, right=TRACTION, bottom=DIRICHLET, top=DIRICHLET)
    mesh = build_rectangle_mesh(2.0, 1.0, 8, 4, tagging=tags)
    inflow = lambda x, y: (np.where(x < 1e-12, 16 * y ** 2 * (1 - y) ** 2, 0.0), 0 * x)
    return FlowProblem(mesh, acceptance_model(), boundary_velocity=inflow, E=(0.0, 1.0))


def driven_cavity(nx: int = 8):
    mesh = build_rectangle_mesh(1.0, 1.0, nx, nx)
    lid = lambda x, y: (np.where(y > 1 - 1e-12, 16 * x ** 2 * (1 - x) ** 2, 0.0), 0 * x)
    return FlowProblem(mesh, constant_model(1.0), boundary_velocity=lid)


@_timed(11, "convection forms and vanishing inertia")
def check_inertial(seed: int):
    rng = np.random.default_rng(seed)
    V = FeSpace(build_rectangle_mesh(1.0, 1.0, 4, 4), 2, 2)
    skew = 0.0
    for _ in range(5):
        C = advection_matrix(V, rng.standard_normal(V.ndof), 1.0, "q1")
        skew = max(skew, float(abs(C + C.T).max()))
        for _ in range(10):
            x = rng.standard_normal(V.ndof)
            skew = max(skew, abs(float(x @ (C @ x))) / float(x @ x))
    orders = {}
    for name, prob in (("mixed", inflow_channel()), ("dirichlet", driven_cavity())):
        stokes, _ = solve_mixed(prob)
        gaps = []
        for rho in (1e-1, 1e-2, 1e-3):
            st, rep = solve_inertial(InertialProblem(prob, rho))
            if not rep.converged:
                return False, {}, f"{name} inertial solve failed at rho={rho}: {rep.message}"
            gaps.append(prob.x_norm(st.u - stokes.u))
        orders[name] = np.log10(np.array(gaps[:-1]) / np.array(gaps[1:])).tolist()
    first_order = all(abs(o - 1.0) < 0.1 for o in sum(orders.values(), []))
    ok = skew <= 1e-12 and first_order
    return ok, dict(skew=skew, orders=orders), f"skew defect {skew:.1e}; observed orders in rho {orders}"


CHECKS: dict[int, Callable] = {c.number: c for c in (
    check_monotonicity, check_lipschitz, check_gateaux, check_infsup, check_electric, check_manufactured,
    check_bingham, check_augmented, check_contraction, check_continuation, check_inertial, check_mu_battery)}

SUITES: dict[str, tuple[int, ...]] = {
    "operators": (1, 2, 3, 12),
    "infsup": (4,),
    "manufactured": (5, 6),
    "bingham": (7, 10),
    "al": (8,),
    "contraction": (9,),
    "inertial": (11,),
}


def run_suite(name: str, seed: int = 42, echo: Callable[[str], None] | None = None) -> list[CheckResult]:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    out = []
    for n in SUITES[name]:
        res = CHECKS[n](seed)
        if echo:
            echo(res.line())
        out.append(res)
    return out
