"""Constitutive laws: orientation factor, viscosity models, operators."""

from .conditions import ConditionReport, ConditionVerdict, check_conditions, default_grid, inferred_bounds
from .models import (Bounds, ConstantField, ConstantShear, CrossShear, ExtendedBingham, FieldCoefficient,
                     FlowCurveShear, GivenMu, ModelError, RegularizedBingham, RegularModel, SaturatingField,
                     ShearFunction, SingularBingham, SingularityError, SplineField, Variant, constant_model,
                     eval_phi)
from .modelfile import ModelFileError, format_model, load_model, parse_model
from .mu import (DEFAULT_ALPHA, Mollifier, MuDomainError, MuFunction, bump_kernel, eval_mu, eval_mu_mollified,
                 mollified_average, mu_values)
from .operators import (FlowContext, FunctionalKind, OperatorKind, assemble_nonlinear_operator,
                        assemble_tangent, eval_functional, finite_difference_check, flow_kinds,
                        potential_density)


def acceptance_model() -> RegularModel:
    """REGULAR model with a1=1, a2=2, a3=1, a4=0.5.

    phi = 1 + s(|E|, mu) * I / (1 + I),  s = (1 - mu) |E|^2 / (1 + |E|^2).
    """
    return RegularModel(
        ((ConstantField(1.0), ConstantShear(1.0)),
         (SaturatingField(0.0, 1.0, 1.0, 1.0), CrossShear(0.0, 1.0, 1.0))),
        Bounds(a1=1.0, a2=2.0, a3=1.0, a4=0.5),
    )
