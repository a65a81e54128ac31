import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erflow.electric import ElectricConfigError, compute_E, compute_electric_forces, solve_potential
from erflow.fem_core.assembly import InvalidCoefficient
from erflow.fem_core.quadrature import LINEAR_RULE
from erflow.fem_core.space import FeSpace
from erflow.mesh import DIRICHLET, TRACTION, build_rectangle_mesh, electrode, ground, rectangle_tagging


def plates(n=4, top_flow=DIRICHLET):
    tags = rectangle_tagging(bottom=(DIRICHLET, ground(1)), top=(top_flow, electrode(1)))
    return build_rectangle_mesh(1.0, 1.0, n, n, tagging=tags)


def test_unit_plates_linear_potential():
    st_ = solve_potential(plates(), 1.0, {1: 1.0})
    x, y = st_.space.dof_coords.T
    assert np.max(np.abs(st_.theta - y)) < 1e-12


def test_voltage_scales_linearly():
    st_ = solve_potential(plates(), 1.0, {1: 5.0})
    assert np.max(np.abs(st_.theta - 5 * st_.space.dof_coords[:, 1])) < 1e-12


def test_two_layer_interface_value():
    # eps 1 below y = 1/2, eps 2 above: equal flux gives theta(1/2) = 2/3
    eps = lambda x, y: np.where(y < 0.5, 1.0, 2.0)
    st_ = solve_potential(plates(4), eps, {1: 1.0})
    pts = np.array([[0.25, 0.5], [0.5, 0.5], [0.9, 0.5]])
    assert np.max(np.abs(st_.theta_points(pts) - 2.0 / 3.0)) < 1e-12


def test_field_is_minus_gradient():
    st_ = solve_potential(plates(), 1.0, {1: 1.0})
    E = compute_E(st_)
    assert np.allclose(E[..., 0], 0, atol=1e-12) and np.allclose(E[..., 1], -1, atol=1e-12)
    # direct checks of the gradient evaluation on hand-built potentials
    V = FeSpace(plates(2), 2, 1, constrained=())
    for fn, expected in [(lambda x, y: 3 + 0 * x, (0.0, 0.0)), (lambda x, y: x + 2 * y, (-1.0, -2.0))]:
        _, g = V.eval_points(V.interpolate(fn), np.array([[0.3, 0.6], [0.8, 0.1]]))
        assert np.allclose(-g[:, 0, :], expected, atol=1e-13)


def test_unknown_electrode_rejected():
    with pytest.raises(ElectricConfigError, match="not present"):
        solve_potential(plates(), 1.0, {1: 1.0, 3: 2.0})
    with pytest.raises(ElectricConfigError, match="no voltage"):
        solve_potential(plates(), 1.0, {})


def test_missing_ground_rejected():
    m = build_rectangle_mesh(1, 1, 2, 2, tagging=rectangle_tagging(top=(DIRICHLET, electrode(1))))
    with pytest.raises(ElectricConfigError, match="GROUND"):
        solve_potential(m, 1.0, {1: 1.0})


def test_bad_permittivity_rejected():
    with pytest.raises(InvalidCoefficient):
        solve_potential(plates(), lambda x, y: x - 0.5, {1: 1.0})


def test_constant_permittivity_no_volume_force():
    st_ = solve_potential(plates(), 1.0, {1: 3.0})
    f = compute_electric_forces(st_)
    V = FeSpace(st_.mesh, 2, 2)
    assert np.max(np.abs(f.K_e_at(V.tabulate(LINEAR_RULE)))) == 0.0
    assert np.max(np.abs(f.body_load(V))) == 0.0


@pytest.mark.parametrize("U", [1.0, 2.5])
def test_plate_stress_and_traction(U):
    st_ = solve_potential(plates(top_flow=TRACTION), 1.0, {1: U})
    f = compute_electric_forces(st_)
    V = FeSpace(st_.mesh, 2, 2)
    c = U ** 2 / (8 * np.pi)
    sig = f.sigma_at(V.tabulate(LINEAR_RULE))
    assert np.allclose(sig, np.diag([-c, c]), atol=1e-12)
    F = f.traction_at(V)
    assert F.shape[0] == 4
    assert np.allclose(F[..., 0], 0, atol=1e-12) and np.allclose(F[..., 1], c, atol=1e-12)
    # uniform stress is divergence free, so the weak form vanishes on free dofs
    assert np.max(np.abs(f.body_load(V, weak=True)[V.free_dofs])) < 1e-12


def test_zero_voltage_gives_zero_forces():
    st_ = solve_potential(plates(top_flow=TRACTION), 1.0, {1: 0.0})
    f = compute_electric_forces(st_)
    V = FeSpace(st_.mesh, 2, 2)
    assert np.max(np.abs(st_.theta)) == 0.0
    assert np.max(np.abs(f.traction_at(V))) == 0.0
    assert np.max(np.abs(f.body_load(V))) == 0.0


def test_flux_conservation():
    eps = lambda x, y: 1 + x + y ** 2
    st_ = solve_potential(plates(6), eps, {1: 2.0})
    net, total = st_.total_electrode_flux()
    assert abs(net) < 1e-10 * total


@settings(max_examples=20, deadline=None)
@given(st.floats(-10, 10), st.floats(0.1, 10))
def test_energy_quadratic_in_voltage(U, eps):
    m = plates(2)
    e1 = solve_potential(m, eps, {1: 1.0}).energy()
    eU = solve_potential(m, eps, {1: U}).energy()
    assert abs(eU - U ** 2 * e1) <= 1e-10 * max(1.0, U ** 2 * e1)
    assert abs(e1 - eps) < 1e-10 * eps
