"""Crisscross vector-host epidemic with nested habitats and infection-age structure."""

from __future__ import annotations

from .config import Config, ConfigError, Problem, build_problem, load_config
from .dynamics import InvariantError, Model, SimState, StepReport, run, step
from .grid import Grid, ScalarField, build_grid
from .steady import detect_limits, solve_rho_star

__all__ = [
    "Config",
    "ConfigError",
    "Grid",
    "InvariantError",
    "Model",
    "Problem",
    "ScalarField",
    "SimState",
    "StepReport",
    "build_grid",
    "build_problem",
    "detect_limits",
    "load_config",
    "run",
    "solve_rho_star",
    "step",
]
