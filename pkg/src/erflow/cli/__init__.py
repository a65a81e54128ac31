"""Scenario runner, output writers and the validation harness."""

from .config import ConfigSyntaxError, Expression, RawConfig, load_config, parse_config
from .main import build_parser, main
from .scenario import EXIT_CODES, Regime, Scenario, ScenarioError, build_scenario, run_scenario
from .validation import CHECKS, SUITES, CheckResult, run_suite
from .writers import NodalFields, fields_to_csv, fields_to_vtk, nodal_fields, read_csv_fields, write_fields

__all__ = [
    "ConfigSyntaxError", "Expression", "RawConfig", "load_config", "parse_config", "build_parser", "main",
    "EXIT_CODES", "Regime", "Scenario", "ScenarioError", "build_scenario", "run_scenario", "CHECKS", "SUITES",
    "CheckResult", "run_suite", "NodalFields", "fields_to_csv", "fields_to_vtk", "nodal_fields",
    "read_csv_fields", "write_fields",
]
