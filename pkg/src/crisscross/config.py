"""Run configuration: a TOML file of flat sections.

Example::

    mode = "paper"

    [domain]
    Lx = 1.0
    Ly = 1.0
    nx = 32
    ny = 32

    [subdomains]
    star = [0.25, 0.75, 0.25, 0.75]      # x0, x1, y0, y1
    starstar = [0.40, 0.50, 0.40, 0.50]

    [coefficients]
    d1 = "0.05"
    ...
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .age import lambda_sample_ages, select_age_grid, snap_tau
from .coeffs import (
    AGE,
    LAB,
    PAPER,
    SPATIAL,
    AssumptionReport,
    CoefficientSet,
    InitialData,
    build_coefficients,
    build_initial_data,
    validate_assumptions,
)
from .diffusion import DIRECT, PCG
from .dynamics import Model, SimState, initial_state
from .expression import ExpressionError, Num, compile_expression
from .grid import Grid, GridError, build_grid

logger = logging.getLogger(__name__)

COEFFICIENT_KEYS = ("d1", "d2", "beta", "m", "sigma1", "sigma2")
INITIAL_KEYS = ("u0", "phi0", "z0", "k")


class ConfigError(ValueError):
    def __init__(self, problems: list[str] | str):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class Config:
    Lx: float
    Ly: float
    nx: int
    ny: int
    star: tuple[float, float, float, float]
    starstar: tuple[float, float, float, float]
    coefficients: dict[str, str]
    lam: str
    tau: float
    initial: dict[str, str]
    dt: float
    t_end: float
    a_max: float | str = "auto"
    output_every: int = 1
    cg_tol: float = 1e-10
    steady_tol: float = 1e-10
    invariant_tol: float = 1e-8
    mode: str = PAPER
    linear_solver: str = DIRECT
    tau_index: int | None = field(default=None, compare=False)
    n_cohorts: int | None = field(default=None, compare=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Config:
        problems: list[str] = []

        def section(name: str, required: bool = True) -> dict[str, Any]:
            sec = data.get(name)
            if sec is None:
                if required:
                    problems.append(f"missing section [{name}]")
                return {}
            if not isinstance(sec, dict):
                problems.append(f"[{name}] must be a section")
                return {}
            return sec

        def get(sec: dict, secname: str, key: str, kind, default=None, required=True):
            if key not in sec:
                if required:
                    problems.append(f"missing key '{key}' in [{secname}]")
                return default
            value = sec[key]
            try:
                if kind is str:
                    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
                        raise TypeError
                    return str(value)
                if kind is int:
                    if isinstance(value, bool) or int(value) != value:
                        raise TypeError
                    return int(value)
                if kind is float:
                    if isinstance(value, bool):
                        raise TypeError
                    return float(value)
                if kind is tuple:
                    out = tuple(float(v) for v in value)
                    if len(out) != 4:
                        raise TypeError
                    return out
            except (TypeError, ValueError):
                problems.append(f"[{secname}] {key} = {value!r} has the wrong type")
                return default
            return value

        dom = section("domain")
        sub = section("subdomains")
        co = section("coefficients")
        ag = section("age")
        ini = section("initial")
        tm = section("time")
        tol = section("tolerances", required=False)
        num = section("numerics", required=False)

        a_max = ag.get("a_max", "auto")
        if a_max != "auto":
            try:
                a_max = float(a_max)
            except (TypeError, ValueError):
                problems.append(f"[age] a_max = {a_max!r} must be 'auto' or a number")
                a_max = "auto"

        cfg = dict(
            Lx=get(dom, "domain", "Lx", float),
            Ly=get(dom, "domain", "Ly", float),
            nx=get(dom, "domain", "nx", int),
            ny=get(dom, "domain", "ny", int),
            star=get(sub, "subdomains", "star", tuple),
            starstar=get(sub, "subdomains", "starstar", tuple),
            coefficients={k: get(co, "coefficients", k, str) for k in COEFFICIENT_KEYS},
            lam=get(ag, "age", "lambda", str),
            tau=get(ag, "age", "tau", float),
            a_max=a_max,
            initial={k: get(ini, "initial", k, str) for k in INITIAL_KEYS},
            dt=get(tm, "time", "dt", float),
            t_end=get(tm, "time", "t_end", float),
            output_every=get(tm, "time", "output_every", int, 1, required=False),
            cg_tol=get(tol, "tolerances", "cg_tol", float, 1e-10, required=False),
            steady_tol=get(tol, "tolerances", "steady_tol", float, 1e-10, required=False),
            invariant_tol=get(tol, "tolerances", "invariant_tol", float, 1e-8, required=False),
            mode=data.get("mode", PAPER),
            linear_solver=get(num, "numerics", "linear_solver", str, DIRECT, required=False),
        )
        psi0 = get(ini, "initial", "psi0", str, None, required=False)
        if psi0 is not None:
            cfg["initial"]["psi0"] = psi0
        if problems:
            raise ConfigError(problems)
        return cls(**cfg)

    def check(self) -> list[str]:
        """Value-level checks that need no field evaluation."""
        problems = []
        if self.mode not in (PAPER, LAB):
            problems.append(f"mode must be 'paper' or 'lab', got {self.mode!r}")
        if self.linear_solver not in (DIRECT, PCG):
            problems.append(f"linear_solver must be '{DIRECT}' or '{PCG}'")
        if not self.dt > 0:
            problems.append("dt must be positive")
        if not self.t_end >= 0:
            problems.append("t_end must be nonnegative")
        if self.output_every < 1:
            problems.append("output_every must be >= 1")
        for name in ("cg_tol", "steady_tol", "invariant_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if not self.tau >= 0:
            problems.append("tau must be nonnegative")
        if self.mode == PAPER and "psi0" in self.initial:
            try:
                node = compile_expression(self.initial["psi0"], SPATIAL)
                if not (isinstance(node, Num) and node.value == 0.0):
                    problems.append("psi0 may only be given in lab mode")
            except ExpressionError:
                pass
        for key, text in self.coefficients.items():
            problems += _expr_problem(f"[coefficients] {key}", text, SPATIAL)
        problems += _expr_problem("[age] lambda", self.lam, AGE)
        for key, text in self.initial.items():
            problems += _expr_problem(f"[initial] {key}", text, AGE if key == "z0" else SPATIAL)
        if self.dt > 0 and self.t_end >= 0:
            q = self.t_end / self.dt
            if abs(q - round(q)) > 1e-9 * max(1.0, q):
                problems.append(f"t_end = {self.t_end} is not a multiple of dt = {self.dt}")
        return problems


def _expr_problem(where: str, text: str, allowed) -> list[str]:
    try:
        compile_expression(text, allowed)
    except ExpressionError as exc:
        return [f"{where}: {exc}"]
    return []


@dataclass(eq=False)
class Problem:
    config: Config
    grid: Grid
    coeffs: CoefficientSet
    initial: InitialData
    model: Model
    assumptions: AssumptionReport

    def initial_state(self) -> SimState:
        return initial_state(self.model, self.initial)


def build_problem(config: Config, enforce: bool = True) -> Problem:
    """Evaluate every field, choose the age grid and check the assumptions.

    In paper mode a failed assumption is an error; lab mode applies the
    relaxed checks.
    """
    problems = config.check()
    if problems:
        raise ConfigError(problems)
    try:
        grid = build_grid(config.Lx, config.Ly, config.nx, config.ny, config.star, config.starstar)
    except GridError as exc:
        raise ConfigError(str(exc)) from None

    lam = compile_expression(config.lam, AGE)
    try:
        n_cohorts, lam_star = select_age_grid(lam, config.dt, config.a_max)
    except (ValueError, ExpressionError) as exc:
        raise ConfigError(f"[age]: {exc}") from None
    logger.info("age range: %d cohorts, a_max = %g (lambda floor %.6g)",
                n_cohorts, n_cohorts * config.dt, lam_star)
    tau_index = snap_tau(config.tau, config.dt)
    if tau_index >= n_cohorts:
        raise ConfigError(f"tau = {config.tau} lies beyond a_max = {n_cohorts * config.dt}")
    config.tau_index, config.n_cohorts = tau_index, n_cohorts

    ages = lambda_sample_ages(config.dt, n_cohorts)
    try:
        coeffs = build_coefficients({**config.coefficients, "lambda": config.lam}, grid, ages)
        initial = build_initial_data(config.initial, grid)
    except ExpressionError as exc:
        raise ConfigError(str(exc)) from None

    midpoints = (0.5 + np.arange(n_cohorts)) * config.dt
    report = validate_assumptions(coeffs, grid, initial, midpoints, config.mode)
    if enforce and not report.ok:
        raise ConfigError(report.failures())

    try:
        model = Model.build(grid, coeffs, config.dt, n_cohorts, tau_index, mode=config.mode,
                            solver=config.linear_solver, cg_tol=config.cg_tol,
                            invariant_tol=config.invariant_tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return Problem(config, grid, coeffs, initial, model, report)


def load_config(path: str | Path, validate: bool = True) -> Config:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from None
    config = Config.from_dict(data)
    if validate:
        build_problem(config)
    return config
