"""Solvers for the inertia-free flow problems."""

from .problem import (ConfigError, FlowProblem, FlowState, IncompatibleDataError, InnerMethod, LiftingField,
                      SolverConfig, SolverReport, build_lifting)
from .mixed import NonConvergence, solve_mixed
from .augmented import augmented_lagrangian_solve, birger_kachanov_step, solve_inner
from .contraction import (ContractionConstants, contraction_constants, contraction_solve, estimate_A_bounds,
                          estimate_BtB_norm)
from .gradient import gradient_solve, saddle_residual
from .continuation import BinghamChannel, bingham_channel_oracle, lambda_continuation, plug_half_width

__all__ = [
    "ConfigError", "FlowProblem", "FlowState", "IncompatibleDataError", "InnerMethod", "LiftingField",
    "SolverConfig", "SolverReport", "build_lifting", "NonConvergence", "solve_mixed",
    "augmented_lagrangian_solve", "birger_kachanov_step", "solve_inner", "ContractionConstants",
    "contraction_constants", "contraction_solve", "estimate_A_bounds", "estimate_BtB_norm",
    "gradient_solve", "saddle_residual", "BinghamChannel", "bingham_channel_oracle", "lambda_continuation", "plug_half_width",
]
