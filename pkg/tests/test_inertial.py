import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erflow.cli.validation import driven_cavity, inflow_channel
from erflow.fem_core.space import FeSpace
from erflow.inertial_solvers import (DensityError, InertialProblem, advection_matrix, newton_inertial,
                                     reaction_matrix, solvability_diagnostics, solve_inertial,
                                     solve_inertial_dirichlet, solve_inertial_mixed, trilinear)
from erflow.mesh import build_rectangle_mesh
from erflow.stokes_solvers import ConfigError, FlowProblem, SolverConfig, solve_mixed
from erflow.viscosity import constant_model

SPACE = FeSpace(build_rectangle_mesh(1.0, 1.0, 3, 3), 2, 2)
vectors = st.integers(0, 2 ** 32 - 1).map(lambda s: np.random.default_rng(s).standard_normal((3, SPACE.ndof)))


def test_zero_advection_field():
    assert abs(advection_matrix(SPACE, np.zeros(SPACE.ndof))).max() == 0.0
    assert abs(reaction_matrix(SPACE, np.zeros(SPACE.ndof))).max() == 0.0


@settings(max_examples=20, deadline=None)
@given(vectors)
def test_skew_form_is_antisymmetric(abc):
    a, v, w = abc
    assert abs(trilinear(SPACE, a, v, w, variant="q1") + trilinear(SPACE, a, w, v, variant="q1")) < 1e-10 * (
        1 + abs(trilinear(SPACE, a, v, w, variant="q1")))
    C = advection_matrix(SPACE, a, variant="q1")
    assert abs(C + C.T).max() < 1e-12


@settings(max_examples=20, deadline=None)
@given(vectors)
def test_matrices_agree_with_trilinear(abc):
    a, v, w = abc
    for variant in ("q", "q1"):
        ref = trilinear(SPACE, a, v, w, variant=variant)
        assert abs(w @ (advection_matrix(SPACE, a, variant=variant) @ v) - ref) < 1e-9 * (1 + abs(ref))
        # reaction matrix linearizes in the first slot
        assert abs(w @ (reaction_matrix(SPACE, v, variant=variant) @ a) - ref) < 1e-9 * (1 + abs(ref))


def test_plain_form_vanishes_for_solenoidal_field():
    rng = np.random.default_rng(1)
    a = SPACE.interpolate(lambda x, y: (y, x))
    for _ in range(5):
        v = np.zeros(SPACE.ndof)
        v[SPACE.free_dofs] = rng.standard_normal(len(SPACE.free_dofs))
        assert abs(trilinear(SPACE, a, v, v)) < 1e-12 * (v @ v)


def test_density_bounds_checked():
    prob = driven_cavity(4)
    with pytest.raises(DensityError):
        InertialProblem(prob, 2.0, density_bounds=(0.1, 1.0))
    with pytest.raises(DensityError):
        InertialProblem(prob, 0.0)


def test_regime_selection():
    with pytest.raises(ConfigError):
        solve_inertial_mixed(InertialProblem(driven_cavity(4), 1.0))
    with pytest.raises(ConfigError):
        solve_inertial_dirichlet(InertialProblem(inflow_channel(), 1.0))


@pytest.mark.parametrize("maker,rho", [(lambda: driven_cavity(6), 50.0), (inflow_channel, 5.0)])
def test_picard_matches_newton(maker, rho):
    prob = InertialProblem(maker(), rho)
    cfg = SolverConfig(tol_velocity=1e-12, tol_residual=1e-12, tol_divergence=1e-11)
    pic, rp = solve_inertial(prob, cfg)
    new, rn = newton_inertial(prob, cfg)
    assert rp.converged and rn.converged
    assert prob.flow.x_norm(pic.u - new.u) < 1e-9 * prob.flow.x_norm(new.u)


@pytest.mark.parametrize("maker", [lambda: driven_cavity(6), inflow_channel])
def test_vanishing_density_recovers_stokes(maker):
    flow = maker()
    stokes, _ = solve_mixed(flow, SolverConfig(tol_residual=1e-12))
    gaps = []
    for rho in (1e-2, 1e-3):
        st_, rep = solve_inertial(InertialProblem(flow, rho), SolverConfig(tol_velocity=1e-12))
        assert rep.converged
        gaps.append(flow.x_norm(st_.u - stokes.u))
    assert 8 < gaps[0] / gaps[1] < 12


def test_mixed_solution_residual():
    prob = InertialProblem(inflow_channel(), 10.0)
    state, rep = solve_inertial_mixed(prob, SolverConfig(tol_velocity=1e-12))
    assert rep.converged
    assert prob.residual_norm(state) < 1e-8
    assert prob.flow.div_norm(state.u) < 1e-9


def test_diagnostics_without_lifting():
    flow = FlowProblem(build_rectangle_mesh(1, 1, 3, 3), constant_model(1.0))
    rep = solvability_diagnostics(InertialProblem(flow, 1.0), samples=20)
    assert rep.eta3 == 0.0 and rep.eta2 == 0.0 and rep.eta4 == rep.a1 == 1.0
    assert rep.passed


def test_diagnostics_linear_in_load():
    etas = []
    for c in (1.0, 3.0):
        flow = FlowProblem(build_rectangle_mesh(1, 1, 3, 3), constant_model(1.0),
                           body=lambda x, y, c=c: (c * np.sin(np.pi * y), c * x * 0))
        rep = solvability_diagnostics(InertialProblem(flow, 1.0), samples=10, seed=3)
        etas.append(rep)
    assert etas[0].eta3 > 0
    assert abs(etas[1].eta3 - 3 * etas[0].eta3) < 1e-12 * etas[1].eta3
    assert etas[0].eta1 == etas[1].eta1


def test_diagnostics_deterministic_and_density_scaled():
    flow = driven_cavity(4)
    r1 = solvability_diagnostics(InertialProblem(flow, 1.0), samples=15, seed=7)
    r2 = solvability_diagnostics(InertialProblem(flow, 1.0), samples=15, seed=7)
    r3 = solvability_diagnostics(InertialProblem(flow, 2.0), samples=15, seed=7)
    assert r1 == r2
    assert abs(r3.eta1 - 2 * r1.eta1) < 1e-12 * r3.eta1


def test_diagnostics_verdict_flips_for_large_load():
    verdicts = []
    # eta1 is small for discretely solenoidal samples, so the flip needs a large load
    for c in (1e-2, 1e8):
        flow = FlowProblem(build_rectangle_mesh(1, 1, 3, 3), constant_model(1.0),
                           body=lambda x, y, c=c: (c * np.sin(np.pi * y), c * x))
        verdicts.append(solvability_diagnostics(InertialProblem(flow, 1.0), samples=20, seed=1).passed)
    assert verdicts == [True, False]
