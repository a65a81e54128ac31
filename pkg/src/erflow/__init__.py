"""Finite-element solvers for stationary electrorheological flow."""

__version__ = "0.1.0"
