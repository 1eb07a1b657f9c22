"""Carrying-capacity steady state and long-time limit detection."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .coeffs import CoefficientSet
from .diagnostics import DiagnosticsSeries, fmt
from .diffusion import DIRECT, DiffusionOperator, DiffusionStep, assemble
from .grid import STAR, Grid, ScalarField

logger = logging.getLogger(__name__)

STAY_BELOW = 10


@dataclass
class SteadyState:
    rho: ScalarField
    residual: float
    march_steps: int
    polished: bool
    march_dt: float


def logistic_residual(rho: np.ndarray, L1: DiffusionOperator, coeffs: CoefficientSet) -> np.ndarray:
    """``-L rho - beta rho + m rho^2`` on the vector habitat."""
    return -(L1.matrix @ rho) - coeffs.beta.values * rho + coeffs.m.values * rho * rho


def solve_rho_star(
    coeffs: CoefficientSet,
    grid: Grid,
    tol: float = 1e-10,
    dt: float = 0.5,
    solver: str = DIRECT,
    max_steps: int = 1_000_000,
) -> SteadyState:
    """Positive steady state of the diffusive logistic equation.

    Marches the implicit logistic scheme from ``max(beta)/m_star`` (an upper
    solution, so the march decreases monotonically) until the update rate
    drops below ``tol``, then polishes with damped Newton on the discrete
    elliptic residual.  The scheme's fixed point is exactly the discrete
    steady state, so the polish only removes the march's leftover.
    """
    L1 = assemble(grid, STAR, coeffs.d1, allow_zero=True)
    beta, m = coeffs.beta.values, coeffs.m.values
    rho = np.full(L1.size, float(beta.max()) / coeffs.m_star)
    steps = 0
    while True:
        new = DiffusionStep(L1, dt, m * rho, solver=solver)((1.0 + dt * beta) * rho)
        steps += 1
        change = float(np.max(np.abs(new - rho))) / dt
        rho = new
        if change < tol:
            break
        if steps >= max_steps:
            logger.warning("steady march stopped after %d steps (rate %.3e)", steps, change)
            break

    res = logistic_residual(rho, L1, coeffs)
    r0 = float(np.max(np.abs(res)))
    polished = False
    for _ in range(8):
        if r0 <= 0.1 * tol:
            break
        jac = (-L1.matrix + sp.diags(2.0 * m * rho - beta)).tocsc()
        delta = spsolve(jac, res)
        theta = 1.0
        while theta > 1e-4:
            trial = rho - theta * delta
            r_trial = float(np.max(np.abs(logistic_residual(trial, L1, coeffs))))
            if np.all(trial > 0) and r_trial < r0:
                break
            theta *= 0.5
        else:
            logger.warning("Newton polish did not reduce the residual; keeping the marched iterate")
            break
        rho, r0, polished = trial, r_trial, True
        res = logistic_residual(rho, L1, coeffs)
    return SteadyState(ScalarField(grid, STAR, rho), r0, steps, polished, dt)


@dataclass
class QuantityLimit:
    name: str
    last: float
    threshold: float
    peak: float
    decay_rate: float
    converged: bool
    crossing_time: float


@dataclass
class ConvergenceReport:
    quantities: dict[str, QuantityLimit] = field(default_factory=dict)
    u_star: float = math.nan
    u_star_error: float = math.nan
    u_star_bound: float = math.nan
    t_end: float = math.nan

    @property
    def all_converged(self) -> bool:
        return all(q.converged for q in self.quantities.values())

    def to_text(self) -> str:
        lines = ["[limits]", f"t_end = {fmt(self.t_end)}"]
        for q in self.quantities.values():
            lines += [
                "",
                f"[limits.{q.name}]",
                f"last = {fmt(q.last)}",
                f"peak = {fmt(q.peak)}",
                f"threshold = {fmt(q.threshold)}",
                f"decay_rate = {fmt(q.decay_rate)}",
                f"converged = {'true' if q.converged else 'false'}",
                f"crossing_time = {fmt(q.crossing_time)}",
            ]
        lines += [
            "",
            "[u_star]",
            f"estimate = {fmt(self.u_star)}",
            f"extrapolation_error = {fmt(self.u_star_error)}",
            f"lower_bound = {fmt(self.u_star_bound)}",
            f"all_converged = {'true' if self.all_converged else 'false'}",
        ]
        return "\n".join(lines) + "\n"


def default_thresholds(series: DiagnosticsSeries, rho_star: ScalarField | None) -> dict[str, float]:
    """Relative thresholds: disease norms to 1e-6 of their peak, u to 1e-6 of
    its initial mean, phi to 1e-4 of the carrying capacity."""
    out = {}
    for name in ("v_l1", "v_linf", "psi_l2", "psi_linf"):
        out[name] = 1e-6 * float(np.max(series[name]))
    out["u_minus_ubar_l2"] = 1e-6 * float(series["u_bar"][0])
    if rho_star is not None:
        out["phi_minus_rho_star_linf"] = 1e-4 * float(np.max(np.abs(rho_star.values)))
    return out


def _decay_rate(t: np.ndarray, y: np.ndarray) -> float:
    tail = max(len(t) // 4, 2)
    t, y = t[-tail:], y[-tail:]
    ok = y > 0
    if ok.sum() < 2:
        return math.inf if np.all(y == 0) else math.nan
    slope = np.polyfit(t[ok], np.log(y[ok]), 1)[0]
    return float(-slope)


def u_star_lower_bound(series: DiagnosticsSeries, sigma2_norm: float) -> float:
    """``u_bar(0) * exp(-|sigma2|_inf * sum dt |psi(t_n)|_inf)``.

    The sum uses the right end of each record interval, which is the form the
    implicit infection sink satisfies exactly when every step is recorded.
    """
    t = series["t"]
    psi = series["psi_linf"]
    integral = float(np.sum(np.diff(t) * psi[1:]))
    return float(series["u_bar"][0]) * math.exp(-sigma2_norm * integral)


def detect_limits(
    series: DiagnosticsSeries,
    rho_star: ScalarField | None = None,
    thresholds: dict[str, float] | None = None,
    sigma2_norm: float | None = None,
) -> ConvergenceReport:
    """Judge the long-time limits from a completed run's records.

    A quantity counts as converged when its last ``STAY_BELOW`` records all
    sit at or below the threshold.
    """
    thresholds = thresholds if thresholds is not None else default_thresholds(series, rho_star)
    t = series["t"]
    rep = ConvergenceReport(t_end=float(t[-1]))
    for name, thr in thresholds.items():
        y = series[name]
        below = y <= thr
        tail = below[-STAY_BELOW:]
        converged = bool(tail.all())
        if below.all():
            crossing = float(t[0])
        elif below[-1]:
            last_above = int(np.flatnonzero(~below)[-1])
            crossing = float(t[last_above + 1])
        else:
            crossing = math.nan
        rep.quantities[name] = QuantityLimit(
            name=name,
            last=float(y[-1]),
            threshold=float(thr),
            peak=float(np.max(y)),
            decay_rate=_decay_rate(t, y),
            converged=converged,
            crossing_time=crossing,
        )

    ubar = series["u_bar"]
    rep.u_star = float(ubar[-1])
    if len(ubar) >= 3:
        d1, d2 = ubar[-2] - ubar[-3], ubar[-1] - ubar[-2]
        if d1 < 0 and d1 < d2 <= 0:
            q = d2 / d1
            rep.u_star_error = float(abs(d2) * q / (1.0 - q))
        else:
            # no geometric decay to extrapolate; fall back to the last change
            rep.u_star_error = float(abs(d2))
    if sigma2_norm is not None:
        rep.u_star_bound = u_star_lower_bound(series, sigma2_norm)
    return rep
