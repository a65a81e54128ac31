import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from erflow.fem_core.assembly import assemble_strain_gram
from erflow.fem_core.space import FeSpace
from erflow.mesh import build_rectangle_mesh
from erflow.viscosity import (ConstantField, ExtendedBingham, GivenMu, ModelFileError, Mollifier, MuDomainError,
                              MuFunction, OperatorKind, RegularizedBingham, SaturatingField, acceptance_model,
                              check_conditions, constant_model, eval_mu, eval_mu_mollified, eval_phi, format_model,
                              parse_model)
from erflow.viscosity.operators import FlowContext, finite_difference_check

EXACT = MuFunction(alpha=0.0)


@pytest.mark.parametrize("u,E,expected", [
    ((1.0, 0.0), (0.0, 2.0), 0.0),
    ((3.0, 4.0), (6.0, 8.0), 1.0),
    ((1.0, 1.0), (1.0, 0.0), 0.5),
])
def test_mu_exact_cases(u, E, expected):
    assert abs(eval_mu(EXACT, u, E) - expected) < 1e-14


def test_mu_regularized_zero_velocity():
    # (alpha (1,1) . e1 / (alpha sqrt 2))^2 = 1/2 for any alpha > 0
    for alpha in (0.1, 1e-3):
        assert abs(eval_mu(MuFunction(alpha=alpha), (0.0, 0.0), (1.0, 0.0)) - 0.5) < 1e-14


def test_mu_zero_field_raises():
    with pytest.raises(MuDomainError):
        eval_mu(EXACT, (1.0, 0.0), (0.0, 0.0))


@settings(max_examples=60, deadline=None)
@given(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
       st.floats(1e-6, 1.0))
def test_mu_in_unit_interval(u, E, alpha):
    if np.hypot(*E) < 1e-6:
        return
    m = eval_mu(MuFunction(alpha=alpha), u, E)
    assert -1e-15 <= m <= 1 + 1e-15


def test_mollified_constant_fields():
    mu = MuFunction(alpha=1e-3, mollifier=Mollifier(0.1))
    u, E = np.array([0.3, -1.2]), np.array([1.0, 2.0])
    got = eval_mu_mollified(mu, lambda p: np.tile(u, (len(p), 1)), lambda p: np.tile(E, (len(p), 1)),
                            np.array([0.5, 0.5]))
    assert abs(got - eval_mu(MuFunction(alpha=1e-3), u, E)) < 1e-14


def test_mollified_support():
    mu = MuFunction(alpha=0.0, mollifier=Mollifier(0.1))
    x = np.array([0.5, 0.5])
    E = lambda p: np.tile([1.0, 0.3], (len(p), 1))
    base = lambda p: np.column_stack([1 + p[:, 0], p[:, 1] ** 2])
    bumped = lambda p: base(p) + 5.0 * (np.linalg.norm(p - x, axis=1) > 0.1)[:, None]
    assert eval_mu_mollified(mu, base, E, x) == eval_mu_mollified(mu, bumped, E, x)


def test_mollified_small_radius_second_order():
    x = np.array([0.4, 0.6])
    u = lambda p: np.column_stack([np.sin(3 * p[:, 0]), np.cos(2 * p[:, 1]) + p[:, 0] ** 2])
    E = lambda p: np.column_stack([1 + p[:, 1] ** 2, 0.5 + 0 * p[:, 0]])
    exact = eval_mu(EXACT, u(x[None])[0], E(x[None])[0])
    errs = [abs(eval_mu_mollified(MuFunction(alpha=0.0, mollifier=Mollifier(a)), u, E, x) - exact)
            for a in (0.08, 0.04)]
    assert 3.0 < errs[0] / errs[1] < 5.0


def test_phi_bingham_values():
    m = RegularizedBingham(ConstantField(1.0), constant_model(1.0), 1.0)
    assert abs(eval_phi(m, 0.0, 0.0, 0.0) - 2.0) < 1e-15
    assert abs(eval_phi(m, 3.0, 0.0, 0.0) - 1.5) < 1e-15


@pytest.mark.parametrize("model", [
    acceptance_model(),
    RegularizedBingham(SaturatingField(0.2, 0.3, 1.0, 1.0), acceptance_model(), 1e-2),
    ExtendedBingham(SaturatingField(0.2, 0.3, 1.0, 1.0), SaturatingField(1.0, 0.5, 1.0, 1.0), 1e-2),
])
def test_phi_ignores_orientation_without_field(model):
    rng = np.random.default_rng(5)
    ref = eval_phi(model, 0.7, 0.0, 0.0)
    for mu in rng.random(50):
        assert eval_phi(model, 0.7, 0.0, mu) == ref


def test_conditions_constant():
    rep = check_conditions(constant_model(2.0))
    assert rep.all_passed
    assert "a1=2" in str(rep["C1.bounds"]) and "a4=0" in str(rep["C1.slope"])


def test_conditions_detect_softening_near_one():
    # z phi(z^2) = z / (1 + z^2) peaks at z = 1
    rep = check_conditions(constant_model(1.0), phi=lambda I, E, mu: 1.0 / (1.0 + I))
    assert not rep["C3"].passed
    assert 0.8 < rep["C3"].where["z"] < 1.25


def test_yield_part_alone_is_monotone():
    lam = 0.3
    y = np.linspace(0, 50, 2001)
    # value from the closed form 1/2 (lam+y)^-1/2 [1 - y/(lam+y)]
    closed = 0.5 / np.sqrt(lam + y) * (1 - y / (lam + y))
    phi = lambda t: 0.5 / np.sqrt(lam + t)
    h = 1e-6
    numeric = phi(y) + 2 * y * (phi(y + h) - phi(np.maximum(y - h, 0))) / (y + h - np.maximum(y - h, 0))
    assert np.all(closed > 0)
    assert np.allclose(numeric, closed, rtol=1e-6, atol=1e-9)
    rep = check_conditions(constant_model(1.0), phi=lambda I, E, mu: phi(I))
    assert rep["C3"].passed


def flow_ctx(model, n=2, mu_fn=None, E=(1.0, 0.5), lifting=None):
    V = FeSpace(build_rectangle_mesh(1, 1, n, n), 2, 2)
    return V, FlowContext(V, model, mu_fn, lifting, E)


def test_zero_state_residual_vanishes():
    models = [acceptance_model(), RegularizedBingham(ConstantField(0.3), acceptance_model(), 0.1),
              GivenMu(ConstantField(0.3), acceptance_model(), 0.4, 0.1)]
    for m in models:
        V, ctx = flow_ctx(m)
        assert np.max(np.abs(ctx.residual(np.zeros(V.ndof)))) == 0.0


def test_constant_viscosity_residual_is_linear():
    c = 1.7
    V, ctx0 = flow_ctx(constant_model(c))
    rng = np.random.default_rng(2)
    lift = rng.standard_normal(V.ndof)
    ctx = FlowContext(V, constant_model(c), None, lift, (1.0, 0.0))
    v = rng.standard_normal(V.ndof)
    K = assemble_strain_gram(V)
    assert np.allclose(ctx.residual(v, OperatorKind.L), 2 * c * (K @ (v + lift)), atol=1e-12)


@pytest.mark.parametrize("model,kinds", [
    (acceptance_model(), ("L_v",)),
    (acceptance_model(), ("L",)),
    (RegularizedBingham(SaturatingField(0.2, 0.3, 1.0, 1.0), acceptance_model(), 0.05), None),
    (GivenMu(ConstantField(0.3), acceptance_model(), 0.4, 0.05), None),
])
def test_tangent_matches_finite_differences(model, kinds):
    V, ctx = flow_ctx(model, mu_fn=MuFunction(alpha=0.05))
    rng = np.random.default_rng(11)
    free = V.free_dofs
    v = np.zeros(V.ndof)
    v[free] = rng.standard_normal(len(free))
    dirs = []
    for _ in range(10):
        w = np.zeros(V.ndof)
        w[free] = rng.standard_normal(len(free))
        dirs.append(w)
    assert finite_difference_check(ctx, v, dirs, kinds) <= 1e-5


def test_functional_simple_shear():
    # J itself does not see lambda
    m = RegularizedBingham(ConstantField(1.0), constant_model(1.0), 1e-3)
    V, ctx = flow_ctx(m, E=(1.0, 0.0))
    h = V.interpolate(lambda x, y: (y, 0 * x))
    assert abs(ctx.functional("J", h, h) - np.sqrt(2.0)) < 1e-12


def test_functional_lambda_limits():
    m = RegularizedBingham(SaturatingField(0.2, 0.3, 1.0, 1.0), constant_model(1.0), 0.1)
    V, ctx = flow_ctx(m)
    rng = np.random.default_rng(4)
    for _ in range(20):
        v, h = rng.standard_normal(V.ndof), rng.standard_normal(V.ndof)
        J = ctx.functional("J", v, h)
        assert ctx.functional("J_lambda", v, h, lam=0.0) == pytest.approx(J, rel=1e-15)
        vals = [ctx.functional("J_lambda", v, h, lam=lam) for lam in (1.0, 0.1, 1e-3)]
        assert vals[0] >= vals[1] >= vals[2] >= J


def test_model_file_round_trip():
    text = ("variant = REGULARIZED_BINGHAM\nlambda = 0.001\nyield = saturating c0=0.1 c1=2 k=0.5 E0=1\n"
            "term.1.coefficient = constant 1\nterm.1.shear = cross beta0=2 beta_inf=1 scale=1\nmu.alpha = 0.01\n")
    model, mu = parse_model(text)
    model2, mu2 = parse_model(format_model(model, mu))
    I = np.linspace(0, 10, 7)
    for absE in (0.0, 1.0, 3.0):
        assert np.array_equal(eval_phi(model, I, absE, 0.3), eval_phi(model2, I, absE, 0.3))
    assert mu2.alpha == mu.alpha


@pytest.mark.parametrize("text,match", [
    ("lambda = 1\n", "variant"),
    ("variant = NOPE\n", "unknown variant"),
    ("variant = REGULAR\nfoo = 1\n", "unknown key"),
    ("variant = REGULARIZED_BINGHAM\nterm.1.coefficient = constant 1\nterm.1.shear = constant 1\n", "yield"),
])
def test_model_file_errors(text, match):
    with pytest.raises(ModelFileError, match=match):
        parse_model(text)
