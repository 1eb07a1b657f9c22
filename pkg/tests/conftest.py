from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import pytest

from crisscross.config import Config, build_problem
from crisscross.oracle import ODEParams

DEMO = Path(__file__).resolve().parents[1] / "src" / "crisscross" / "configs" / "demo.toml"

# 5x5 cells on the unit square, vector habitat = centre 3x3, 8 cohorts.
SMALL = {
    "mode": "paper",
    "domain": {"Lx": 1.0, "Ly": 1.0, "nx": 5, "ny": 5},
    "subdomains": {"star": [0.25, 0.75, 0.25, 0.75], "starstar": [0.25, 0.55, 0.25, 0.55]},
    "coefficients": {
        "d1": "0.1 + 0.05*x",
        "d2": "0.2",
        "beta": "1 + 0.3*y",
        "m": "1",
        "sigma1": "3",
        "sigma2": "2",
    },
    "age": {"lambda": "1 + a", "tau": 0.2, "a_max": 0.4},
    "initial": {"u0": "1 + 0.5*x", "phi0": "0.8", "z0": "a*exp(-a)", "k": "1 + x*y"},
    "time": {"dt": 0.05, "t_end": 1.0, "output_every": 1},
}

# Lab mode, no host diffusion, seed spread over the whole vector habitat:
# every habitat cell then follows the same scalar trajectory.
HOMOGENEOUS = dict(
    mode="lab",
    subdomains={"star": [0.25, 0.75, 0.25, 0.75], "starstar": [0.25, 0.75, 0.25, 0.75]},
    coefficients={"d1": "0.1", "d2": "0", "beta": "2", "m": "1", "sigma1": "3", "sigma2": "2"},
    initial={"u0": "1", "phi0": "0.1", "z0": "a*exp(-a)", "k": "1"},
)

ACCEPTANCE_LINES: list[str] = []


def merged(base: dict, **sections) -> dict:
    """Deep-copy ``base`` and update the named sections key by key."""
    out = copy.deepcopy(base)
    for name, values in sections.items():
        if isinstance(values, dict):
            out.setdefault(name, {}).update(values)
        else:
            out[name] = values
    return out


def small_problem(**sections):
    return build_problem(Config.from_dict(merged(SMALL, **sections)))


def homogeneous_params(p, **over) -> ODEParams:
    """Scalar parameters matching ``HOMOGENEOUS`` on problem ``p``."""
    n_star = p.grid.n_active("star")
    kw = dict(beta=2.0, m=1.0, sigma1=3.0, sigma2=2.0, phi0=0.1, u0=1.0,
              z0=lambda a: a * np.exp(-a), lam=lambda a: 1.0 + a, tau=p.config.tau,
              n_cohorts=p.model.n_cohorts, k=1.0 / (n_star * p.grid.cell_area))
    kw.update(over)
    return ODEParams(**kw)


def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def to_toml(data: dict) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in data.items() if not isinstance(v, dict)]
    for name, sec in data.items():
        if isinstance(sec, dict):
            lines += ["", f"[{name}]"] + [f"{k} = {_toml_value(v)}" for k, v in sec.items()]
    return "\n".join(lines) + "\n"


@pytest.fixture
def small():
    return small_problem()


@pytest.fixture
def write_config(tmp_path):
    def _write(data: dict, name: str = "config.toml") -> Path:
        path = tmp_path / name
        path.write_text(to_toml(data), encoding="utf-8")
        return path

    return _write


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
