import numpy as np
import pytest
import scipy.sparse as sp

from erflow.mesh import build_rectangle_mesh
from erflow.stokes_solvers import (BinghamChannel, ConfigError, ContractionConstants, FlowProblem,
                                   IncompatibleDataError, InnerMethod, SolverConfig, augmented_lagrangian_solve,
                                   bingham_channel_oracle, birger_kachanov_step, contraction_constants,
                                   contraction_solve, gradient_solve, lambda_continuation, solve_inner, solve_mixed)
from erflow.stokes_solvers.augmented import inner_residual
from erflow.stokes_solvers.gradient import pack_state, phi2, phi2_gradient
from erflow.viscosity import ConstantField, RegularizedBingham, acceptance_model, constant_model
from erflow.viscosity.models import ConstantShear, RegularModel


def square(n=4):
    return build_rectangle_mesh(1.0, 1.0, n, n)


def lid(x, y):
    return np.where(y > 1 - 1e-12, 1.0, 0.0), 0.0 * x


def poiseuille(nx=4, ny=2, G=2.0):
    ch = BinghamChannel(G=G, tau0=0.0)
    return ch, ch.problem(nx, ny, model=constant_model(1.0))


def test_zero_lifting():
    prob = FlowProblem(square(2), constant_model(1.0))
    assert np.max(np.abs(prob.lifting.u)) == 0.0


def test_constant_boundary_velocity_lifts_to_constant():
    prob = FlowProblem(square(3), constant_model(1.0), boundary_velocity=lambda x, y: (1.0 + 0 * x, 0 * y))
    n = prob.vspace.n_scalar
    assert np.allclose(prob.lifting.u[:n], 1.0, atol=1e-12)
    assert np.allclose(prob.lifting.u[n:], 0.0, atol=1e-12)


def test_cavity_lifting_divergence_free():
    prob = FlowProblem(square(6), constant_model(1.0), boundary_velocity=lid)
    assert prob.lifting.div_norm <= 1e-10
    assert prob.div_norm(prob.lifting.u) <= 1e-10


def test_net_flux_rejected_on_closed_domain():
    with pytest.raises(IncompatibleDataError):
        FlowProblem(square(2), constant_model(1.0), boundary_velocity=lambda x, y: (x, 0 * y))


def test_poiseuille_exact():
    ch, prob = poiseuille()
    state, rep = solve_mixed(prob)
    assert rep.converged
    pts = np.column_stack([np.full(9, 0.7), np.linspace(0, 1, 9)])
    exact = 0.5 * ch.G * pts[:, 1] * (1 - pts[:, 1])
    u = state.velocity_at(pts)
    assert np.max(np.abs(u[:, 0] - exact)) < 1e-11
    assert np.max(np.abs(u[:, 1])) < 1e-11
    assert np.max(np.abs(state.pressure_at(pts))) < 1e-9


def test_zero_data_zero_solution():
    prob = FlowProblem(square(3), acceptance_model(), E=(1.0, 0.0))
    state, rep = solve_mixed(prob)
    assert rep.converged and rep.iterations == 1
    assert np.max(np.abs(state.v)) == 0.0 and np.max(np.abs(state.p)) == 0.0


def test_config_rejects_large_multiplier_step():
    with pytest.raises(ConfigError, match="2r"):
        SolverConfig(r=1.0, rho_schedule=2.5)
    prob = FlowProblem(square(2), constant_model(1.0))
    with pytest.raises(ConfigError):
        augmented_lagrangian_solve(prob, SolverConfig(rho_schedule=2.5))


@pytest.mark.parametrize("kwargs", [dict(lambda_schedule=(1e-2, 1e-1)), dict(lambda_schedule=(0.0,)),
                                    dict(t="FAST"), dict(t=-1.0), dict(max_outer=0), dict(r=0.0)])
def test_config_preconditions(kwargs):
    with pytest.raises(ConfigError):
        SolverConfig(**kwargs)


def test_augmented_from_fixed_point():
    prob = FlowProblem(square(4), acceptance_model(), E=(1.0, 0.5), boundary_velocity=lid)
    ref, rep = solve_mixed(prob, SolverConfig(tol_residual=1e-13, tol_divergence=1e-13))
    assert rep.converged
    state, rep = augmented_lagrangian_solve(prob, SolverConfig(tol_velocity=1e-8, tol_divergence=1e-8),
                                            initial=ref)
    assert rep.converged and rep.iterations == 1


def test_birger_kachanov_constant_viscosity_one_step():
    _, prob = poiseuille()
    p = np.zeros(prob.pspace.ndof)
    v, res, its = solve_inner(prob, p, 1.0, InnerMethod.BIRGER_KACHANOV, np.zeros(prob.vspace.ndof), 1e-10, 10)
    assert its == 1 and res < 1e-10


def test_birger_kachanov_step_lowers_energy():
    # for the GIVEN_MU acceptance law the frozen-coefficient step is an energy descent
    from erflow.viscosity import GivenMu
    prob = FlowProblem(square(4), GivenMu(ConstantField(0.1), acceptance_model(), 0.5, 0.01), E=(0.0, 1.0),
                       body=(1.0, 0.5))
    r = 1.0
    p = np.zeros(prob.pspace.ndof)

    def residual_norm(v):
        return prob.dual_norm(inner_residual(prob, v, p, r))

    v = np.zeros(prob.vspace.ndof)
    norms = [residual_norm(v)]
    for _ in range(4):
        v = birger_kachanov_step(prob, v, p, r)
        norms.append(residual_norm(v))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_contraction_constants_examples():
    c = contraction_constants(1, 1, 1, 0, 0, 1.0, 1, 1)
    assert (c.mu1, c.mu2, c.q1, c.q2, c.q3, c.t0, c.k0) == (2, 2, 2, 2, 2, 0.5, 0.0)
    assert c.k(c.t0) == 0.0
    c = contraction_constants(1, 2, 1.5, 0.5, 1, 0.25, 2, 0.5, r=1.0, normBtB=3.0)
    # mu1 = 2, mu2 = 6, q1 = 1, q2 = (6 + 8) / sqrt(0.5), q3 = q2 + 3
    q2 = 14 / np.sqrt(0.5)
    assert c.q1 == 1.0 and abs(c.q2 - q2) < 1e-12 and abs(c.q3 - (q2 + 3)) < 1e-12
    assert abs(c.k0 - np.sqrt(1 - 1 / (q2 + 3) ** 2)) < 1e-15
    ks = [contraction_constants(1, 1, 1, 0, 1, lam, 1, 1).k0 for lam in (1, 1e-4, 1e-8, 1e-12)]
    assert all(a < b for a, b in zip(ks, ks[1:])) and ks[-1] > 1 - 1e-11


@pytest.mark.parametrize("bad", [dict(lam=0.0), dict(b2=0.0), dict(a1=0.0)])
def test_contraction_constants_reject(bad):
    args = dict(a1=1, a2=1, a3=1, a4=0, a5=0, lam=1.0, b1=1, b2=1)
    args.update(bad)
    with pytest.raises(ValueError):
        contraction_constants(**args)


def test_contraction_with_exact_operator_one_step():
    _, prob = poiseuille()
    r = 1.0
    free = prob.free
    Bf = prob.B_free.toarray()
    J = 2.0 * prob.gram[free][:, free].toarray() + r * Bf.T @ np.linalg.solve(prob.M_p.toarray(), Bf)
    ref, _ = contraction_solve(prob, r, A=sp.csr_matrix(J), t=1.0, tol=1e-13, max_iter=5,
                               constants=ContractionConstants(1, 1, 1, 1, 1, 1, 0))
    v, rep = contraction_solve(prob, r, A=sp.csr_matrix(J), t=1.0, tol=1e-13, max_iter=1, reference=ref,
                               constants=ContractionConstants(1, 1, 1, 1, 1, 1, 0))
    assert rep.rows[0]["error"] < 1e-12


def test_contraction_rejects_step_outside_interval():
    _, prob = poiseuille()
    with pytest.raises(ConfigError):
        contraction_solve(prob, 0.0, t=10.0, constants=contraction_constants(1, 1, 1, 0, 0, 1.0, 1, 1))


def test_gradient_zero_iterations_at_solution():
    _, prob = poiseuille()
    ref, _ = solve_mixed(prob, SolverConfig(tol_residual=1e-13))
    state, rep = gradient_solve(prob, SolverConfig(tol_residual=1e-9), initial=ref)
    assert rep.converged and rep.iterations == 0


def test_gradient_matches_finite_differences():
    prob = FlowProblem(square(2), acceptance_model(), E=(1.0, 0.5), boundary_velocity=lid)
    rng = np.random.default_rng(8)
    c = pack_state(prob, prob.zero_state()) + 0.1 * rng.standard_normal(len(pack_state(prob, prob.zero_state())))
    g = phi2_gradient(prob, c)
    h = 1e-6
    for _ in range(5):
        d = rng.standard_normal(len(c))
        fd = (phi2(prob, c + h * d) - phi2(prob, c - h * d)) / (2 * h)
        assert abs(fd - g @ d) <= 1e-6 * max(1.0, abs(fd))


def test_gradient_descends_on_linear_problem():
    _, prob = poiseuille(2, 2)
    state, rep = gradient_solve(prob, SolverConfig(tol_residual=1e-6, max_inner=50))
    phis = rep.column("phi2")
    assert np.all(np.diff(phis) < 0)


def test_continuation_without_yield_is_stationary():
    ch = BinghamChannel(G=2.0, tau0=0.0)
    psi = RegularModel(((ConstantField(1.0), ConstantShear(1.0)),))
    family = lambda lam: RegularizedBingham(ConstantField(0.0), psi, lam)
    prob = ch.problem(4, 2, model=family(1e-1))
    states, rep = lambda_continuation(prob, (1e-1, 1e-2, 1e-3), family=family)
    assert rep.converged and len(states) == 3
    assert np.all(rep.column("diff_l2")[1:] < 1e-12)


def test_continuation_rejects_increasing_schedule():
    ch = BinghamChannel()
    with pytest.raises(ConfigError):
        lambda_continuation(ch.problem(2, 2), (1e-3, 1e-2))


def test_channel_oracle_approaches_bingham_profile():
    ch = BinghamChannel(G=2.0, tau0=0.5)
    y = np.linspace(0, 1, 41)
    _, U = bingham_channel_oracle(ch, 1e-12, y)
    # ideal Bingham profile below the plug, mirrored above
    yc = 0.5 - ch.plug_half_width
    yl = np.minimum(np.minimum(y, 1 - y), yc)
    exact = (ch.G * (0.5 * ch.height * yl - 0.5 * yl ** 2) - ch.tau0 * yl) / ch.nu
    assert np.max(np.abs(U - exact)) < 1e-4
