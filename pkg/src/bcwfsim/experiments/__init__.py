"""Scenario files, the run pipeline, built-in scenarios and the CLI."""

from .builtins import REGISTRY, run_builtin
from .runner import RunResult, StageError, prepare, run_scenario
from .scenario import ScenarioSpec, format_scenario, load_scenario, parse_scenario, validate_scenario

__all__ = ["REGISTRY", "RunResult", "ScenarioSpec", "StageError", "format_scenario",
           "load_scenario", "parse_scenario", "prepare", "run_builtin", "run_scenario",
           "validate_scenario"]
