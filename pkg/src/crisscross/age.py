"""Infection-age structure of the infected hosts.

The age step equals the time step, so a cohort moves exactly one age cell
per time step: transport is a shift, followed by the diffusion step and the
survival factor of the age cell it leaves.  Cohort ``j`` holds the density
at age ``(j + 1/2) * da``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .expression import Node, evaluate
from .grid import OMEGA, Grid, ScalarField

logger = logging.getLogger(__name__)

TAIL_EPS = 1e-10
MAX_COHORTS = 100_000

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)

LambdaLike = Node | Callable[[np.ndarray], np.ndarray]


def _lam(lam: LambdaLike, a: np.ndarray) -> np.ndarray:
    if callable(lam):
        return np.asarray(lam(a), dtype=float)
    return np.broadcast_to(np.asarray(evaluate(lam, a=a), dtype=float), np.shape(a))


def hazard_integral(lam: LambdaLike, a_lo: np.ndarray | float, a_hi: np.ndarray | float) -> np.ndarray:
    """Five-point Gauss-Legendre integral of the recovery rate on [a_lo, a_hi]."""
    a_lo = np.asarray(a_lo, dtype=float)
    a_hi = np.asarray(a_hi, dtype=float)
    half = 0.5 * (a_hi - a_lo)
    mid = 0.5 * (a_hi + a_lo)
    nodes = mid[..., None] + half[..., None] * _GL_NODES
    return half * (_lam(lam, nodes) @ _GL_WEIGHTS)


def survival_factor(lam: LambdaLike, a_lo: float, a_hi: float) -> float:
    if not a_lo < a_hi:
        raise ValueError("need a_lo < a_hi")
    return float(np.exp(-hazard_integral(lam, a_lo, a_hi)))


@dataclass(frozen=True)
class SurvivalTable:
    da: float
    factors: np.ndarray

    @classmethod
    def build(cls, lam: LambdaLike, da: float, n_cohorts: int) -> SurvivalTable:
        faces = np.arange(n_cohorts + 1) * da
        q = hazard_integral(lam, faces[:-1], faces[1:])
        factors = np.exp(-q)
        factors.setflags(write=False)
        return cls(float(da), factors)

    def __len__(self) -> int:
        return len(self.factors)

    def product(self, first: int, stop: int) -> float:
        """Product of factors ``first .. stop-1`` (empty product is one)."""
        out = 1.0
        for s in self.factors[first:stop]:
            out *= s
        return out


def lambda_sample_ages(da: float, n_cohorts: int) -> np.ndarray:
    """Ages at which the recovery-rate floor is measured: faces and Gauss nodes."""
    faces = np.arange(n_cohorts + 1) * da
    mid = 0.5 * (faces[:-1] + faces[1:])
    nodes = (mid[:, None] + 0.5 * da * _GL_NODES).ravel()
    return np.concatenate([faces, nodes])


def cohorts_for_tail(lambda_star: float, da: float) -> int:
    if not lambda_star > 0:
        raise ValueError("automatic age range needs a positive recovery-rate floor")
    n = math.ceil(math.log(1.0 / TAIL_EPS) / (lambda_star * da) - 1e-9)
    return max(n, 1)


def select_age_grid(lam: Node, da: float, a_max: float | str = "auto") -> tuple[int, float]:
    """Choose the cohort count; returns ``(J, lambda_star)``.

    The automatic policy takes the smallest multiple of ``da`` with
    ``exp(-lambda_star * a_max) <= 1e-10``; the floor is re-measured on the
    chosen range until the count settles.
    """
    from .coeffs import lambda_floor

    if a_max != "auto":
        n = math.ceil(float(a_max) / da - 1e-9)
        if n < 1:
            raise ValueError("a_max must cover at least one cohort")
        if n > MAX_COHORTS:
            raise ValueError(f"a_max needs {n} cohorts, more than {MAX_COHORTS}")
        return n, lambda_floor(lam, lambda_sample_ages(da, n))

    n = 64
    for _ in range(50):
        lam_star = lambda_floor(lam, lambda_sample_ages(da, n))
        if not lam_star > 0:
            raise ValueError(
                f"recovery-rate floor {lam_star:.3g} is not positive; give a_max explicitly"
            )
        needed = cohorts_for_tail(lam_star, da)
        if needed > MAX_COHORTS:
            raise ValueError(f"age range needs {needed} cohorts, more than {MAX_COHORTS}")
        if needed <= n:
            final = lambda_floor(lam, lambda_sample_ages(da, needed))
            return needed, final
        n = needed
    raise RuntimeError("age-range selection did not settle")


def snap_tau(tau: float, da: float) -> int:
    """Index of the cohort face nearest to ``tau`` (ties round up)."""
    q = tau / da
    j = math.floor(q + 0.5 + 1e-9)
    if abs(q - j) > 1e-9:
        logger.warning("incubation period %g snapped to %g (= %d age steps)", tau, j * da, j)
    return j


@dataclass(eq=False)
class AgeDensity:
    grid: Grid
    da: float
    cohorts: np.ndarray  # shape (J, n_cells)

    def __post_init__(self) -> None:
        self.cohorts = np.asarray(self.cohorts, dtype=float)
        n = self.grid.n_active(OMEGA)
        if self.cohorts.ndim != 2 or self.cohorts.shape[1] != n:
            raise ValueError(f"cohort stack must be (J, {n}), got {self.cohorts.shape}")

    @property
    def n_cohorts(self) -> int:
        return self.cohorts.shape[0]

    @property
    def a_max(self) -> float:
        return self.n_cohorts * self.da

    @property
    def ages(self) -> np.ndarray:
        return (np.arange(self.n_cohorts) + 0.5) * self.da

    def cohort(self, j: int) -> ScalarField:
        return ScalarField(self.grid, OMEGA, self.cohorts[j].copy())

    def copy(self) -> AgeDensity:
        return AgeDensity(self.grid, self.da, self.cohorts.copy())


def age_step(
    i: AgeDensity,
    diffusion_step: Callable[[np.ndarray], np.ndarray],
    survival: SurvivalTable,
    birth: ScalarField | np.ndarray,
) -> AgeDensity:
    """Advance every cohort by one step along its characteristic.

    ``diffusion_step`` maps a stack of fields stored one per row.  The last
    cohort leaves the age range and is dropped.
    """
    if len(survival) != i.n_cohorts:
        raise ValueError("survival table and cohort stack disagree on J")
    b = birth.values if isinstance(birth, ScalarField) else np.asarray(birth, float)
    if b.shape != (i.cohorts.shape[1],):
        raise ValueError("birth field has the wrong shape")
    new = np.empty_like(i.cohorts)
    if i.n_cohorts > 1:
        new[1:] = survival.factors[:-1, None] * diffusion_step(i.cohorts[:-1])
    new[0] = b
    return AgeDensity(i.grid, i.da, new)


def age_step_losses(i: AgeDensity, survival: SurvivalTable) -> tuple[float, float]:
    """Mass that one ``age_step`` removes: ``(recovered, truncated)``.

    The truncated part is what survives out of the last cohort.
    """
    mass = i.grid.cell_area * i.cohorts.sum(axis=1)
    s = survival.factors
    recovered = i.da * float(np.sum((1.0 - s) * mass))
    truncated = i.da * float(s[-1] * mass[-1])
    return recovered, truncated


def integrate_age(i: AgeDensity) -> ScalarField:
    return ScalarField(i.grid, OMEGA, i.da * i.cohorts.sum(axis=0))


def integrate_age_from(i: AgeDensity, tau: float | None = None, *, start: int | None = None) -> ScalarField:
    """Age integral over ages beyond ``tau`` (snapped to a cohort face)."""
    j0 = snap_tau(tau, i.da) if start is None else int(start)
    if j0 < 0 or j0 >= i.n_cohorts:
        raise ValueError(f"tau at cohort face {j0} is outside the age range [0, {i.a_max})")
    return ScalarField(i.grid, OMEGA, i.da * i.cohorts[j0:].sum(axis=0))


def seed_initial(z0: LambdaLike, k: ScalarField, da: float, n_cohorts: int) -> AgeDensity:
    """Separable seed ``z0(a_j) * k(x)`` at the cohort midpoints."""
    ages = (np.arange(n_cohorts) + 0.5) * da
    z = _lam(z0, ages)
    return AgeDensity(k.grid, da, np.outer(z, k.values))
