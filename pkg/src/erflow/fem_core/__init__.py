from .assembly import (
    InvalidCoefficient,
    assemble_body_load,
    assemble_divergence,
    assemble_mass,
    assemble_scalar_stiffness,
    assemble_strain_gram,
    assemble_traction_load,
    assemble_vector_laplacian,
    invariant_I,
    norm_X,
    shear_rate,
    strain_rate,
)
from .infsup import InfSupResult, estimate_discrete_infsup
from .linalg import SolverFailure, solve_linear, solve_with_dirichlet, to_matrix_market
from .quadrature import line_rule, triangle_rule
from .space import FeSpace, Tabulation

__all__ = [
    "FeSpace", "Tabulation", "InvalidCoefficient", "SolverFailure", "InfSupResult",
    "assemble_body_load", "assemble_divergence", "assemble_mass", "assemble_scalar_stiffness",
    "assemble_strain_gram", "assemble_traction_load", "assemble_vector_laplacian",
    "estimate_discrete_infsup", "invariant_I", "line_rule", "norm_X", "shear_rate",
    "solve_linear", "solve_with_dirichlet", "strain_rate", "to_matrix_market", "triangle_rule",
]
