"""Flow problems with inertia: convective forms, Picard solvers and solvability diagnostics."""

from .convection import VARIANTS, advection_matrix, convection_vector, reaction_matrix, trilinear
from .diagnostics import DivergenceFreeProjector, SolvabilityReport, solvability_diagnostics
from .solvers import (DensityError, InertialProblem, newton_inertial, picard_solve, solve_inertial,
                      solve_inertial_dirichlet, solve_inertial_mixed)

__all__ = [
    "VARIANTS", "advection_matrix", "convection_vector", "reaction_matrix", "trilinear",
    "DivergenceFreeProjector", "SolvabilityReport", "solvability_diagnostics", "DensityError",
    "InertialProblem", "newton_inertial", "picard_solve", "solve_inertial", "solve_inertial_dirichlet",
    "solve_inertial_mixed",
]
