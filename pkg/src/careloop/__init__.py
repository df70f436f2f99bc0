"""Simulated fog-hosted MAPE-K loops for context-aware health monitoring."""

from .errors import CareloopError, InvariantViolation, ParseError, ValidationError
from .report import RunReport, compare, render
from .scenario import Scenario, load_scenario, parse_scenario
from .simulation import Simulation, run

__all__ = [
    "CareloopError",
    "InvariantViolation",
    "ParseError",
    "RunReport",
    "Scenario",
    "Simulation",
    "ValidationError",
    "compare",
    "load_scenario",
    "parse_scenario",
    "render",
    "run",
]

__version__ = "0.1.0"
