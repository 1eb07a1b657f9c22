"""Norms and totals recorded along a run."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .age import integrate_age
from .grid import ScalarField, integrate

COLUMNS = (
    "t",
    "U",
    "V",
    "V_tau_total",
    "v_l1",
    "v_linf",
    "psi_l1",
    "psi_l2",
    "psi_linf",
    "phi_minus_rho_star_linf",
    "u_minus_ubar_l2",
    "u_bar",
    "mass_residual",
    "clamp_flag",
)

L1, L2, LINF = "L1", "L2", "Linf"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def norm(f: ScalarField | np.ndarray, kind: str, cell_area: float | None = None) -> float:
    """Midpoint-rule L1 / L2 norm or max norm over the field's mask."""
    if isinstance(f, ScalarField):
        values, area = f.values, f.grid.cell_area
    else:
        values, area = np.asarray(f, dtype=float), cell_area
    if kind == LINF:
        return float(np.max(np.abs(values))) if values.size else 0.0
    if area is None:
        raise ValueError("cell_area is needed for integral norms of bare arrays")
    if kind == L1:
        return area * float(np.sum(np.abs(values)))
    if kind == L2:
        return math.sqrt(area * float(np.sum(values * values)))
    raise ValueError(f"unknown norm {kind!r}")


def record(state, rho_star: ScalarField | None = None, mass_residual: float = 0.0,
           clamped: bool = False) -> dict[str, float]:
    grid = state.u.grid
    U = integrate(state.u)
    u_bar = U / grid.area
    if rho_star is None:
        phi_dev = math.nan
    else:
        phi_dev = norm(state.phi.values - rho_star.values, LINF)
    return {
        "t": state.t,
        "U": U,
        "V": integrate(state.v),
        "V_tau_total": integrate(state.v_tau),
        "v_l1": norm(state.v, L1),
        "v_linf": norm(state.v, LINF),
        "psi_l1": norm(state.psi, L1),
        "psi_l2": norm(state.psi, L2),
        "psi_linf": norm(state.psi, LINF),
        "phi_minus_rho_star_linf": phi_dev,
        "u_minus_ubar_l2": norm(state.u.values - u_bar, L2, grid.cell_area),
        "u_bar": u_bar,
        "mass_residual": float(mass_residual),
        "clamp_flag": 1.0 if clamped else 0.0,
    }


def cross_check_v(state) -> float:
    """Largest gap between the cached age integral and a fresh cohort sum."""
    return float(np.max(np.abs(state.v.values - integrate_age(state.i).values)))


class DiagnosticsSeries:
    def __init__(self, rows: list[dict[str, float]] | None = None):
        self.rows: list[dict[str, float]] = []
        for row in rows or ():
            self.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: dict[str, float]) -> None:
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError(f"time must increase: {row['t']} after {self.rows[-1]['t']}")
        self.rows.append({c: float(row[c]) for c in COLUMNS})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def __getitem__(self, name: str) -> np.ndarray:
        return self.column(name)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([fmt(r[c]) for c in COLUMNS])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8", newline="")
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> DiagnosticsSeries:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ValueError(f"unexpected header {reader.fieldnames}")
            return cls([{k: float(v) for k, v in row.items()} for row in reader])
