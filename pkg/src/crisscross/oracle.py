"""Reference computations that check the stepper by independent bookkeeping.

``represent_i`` rebuilds any cohort directly from the seed or from the
recorded births by composing diffusion steps along its characteristic;
``ode_reduction`` is the scalar shadow of one step with diffusion removed;
``logistic_exact`` is the closed-form homogeneous logistic solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .age import AgeDensity, SurvivalTable, snap_tau
from .grid import OMEGA, ScalarField

Step = Callable[[np.ndarray], np.ndarray]


def _compose(step: Step, w: np.ndarray, times: int) -> np.ndarray:
    for _ in range(times):
        w = step(w)
    return w


def represent_i(
    diffusion_step: Step,
    survival: SurvivalTable,
    seed: AgeDensity,
    birth_history: Sequence[np.ndarray | ScalarField | None],
    n: int,
    j: int,
) -> ScalarField:
    """Cohort ``j`` after ``n`` steps, read off its characteristic.

    For ``n <= j`` the cohort descends from seed cohort ``j - n``; otherwise
    from the birth deposited at step ``n - j`` (``birth_history[m]`` is the
    birth of step ``m``; entry 0 is unused).
    """
    J = seed.n_cohorts
    if not (0 <= j < J) or n < 0:
        raise IndexError(f"cohort {j} / step {n} out of range (J = {J})")
    if n <= j:
        src = seed.cohorts[j - n]
        factor = survival.product(j - n, j)
        times = n
    else:
        m = n - j
        if m >= len(birth_history) or birth_history[m] is None:
            raise IndexError(f"no birth recorded for step {m}")
        b = birth_history[m]
        src = b.values if isinstance(b, ScalarField) else np.asarray(b, dtype=float)
        factor = survival.product(0, j)
        times = j
    return ScalarField(seed.grid, OMEGA, factor * _compose(diffusion_step, src, times))


def v_tau_first_interval(
    seed: AgeDensity,
    diffusion_step: Step,
    survival: SurvivalTable,
    tau: float,
    t_steps: int,
) -> ScalarField:
    """Infectious host density at step ``t_steps <= tau/da`` from the seed alone."""
    j_tau = snap_tau(tau, seed.da)
    if t_steps > j_tau:
        raise ValueError(f"step {t_steps} lies beyond the incubation period ({j_tau} steps)")
    total = np.zeros(seed.cohorts.shape[1])
    for j in range(j_tau, seed.n_cohorts):
        total += represent_i(diffusion_step, survival, seed, (), t_steps, j).values
    return ScalarField(seed.grid, OMEGA, seed.da * total)


def logistic_exact(rho0: float, beta: float, m: float, t: float) -> float:
    return beta * rho0 / (m * rho0 + (beta - m * rho0) * math.exp(-beta * t))


@dataclass(frozen=True)
class ODEParams:
    beta: float
    m: float
    sigma1: float
    sigma2: float
    phi0: float
    u0: float
    z0: Callable[[np.ndarray], np.ndarray]
    lam: Callable[[np.ndarray], np.ndarray]
    tau: float
    n_cohorts: int
    k: float = 1.0
    psi0: float = 0.0


def ode_reduction(params: ODEParams, dt: float, n: int) -> dict[str, np.ndarray]:
    """Spatially homogeneous trajectory with every diffusion step replaced by
    the identity; same splitting arithmetic as the field stepper.

    ``params.k`` is the (constant) seeding density at the cell of interest.
    """
    p = params
    J = p.n_cohorts
    s = SurvivalTable.build(p.lam, dt, J).factors
    j_tau = snap_tau(p.tau, dt)
    ages = (np.arange(J) + 0.5) * dt
    c = np.asarray(p.z0(ages), dtype=float) * p.k
    phi, psi, u = float(p.phi0), float(p.psi0), float(p.u0)
    rho = phi + psi
    out = {k: np.empty(n + 1) for k in ("rho", "phi", "psi", "u", "V", "V_tau")}

    def store(idx):
        out["rho"][idx], out["phi"][idx], out["psi"][idx], out["u"][idx] = rho, phi, psi, u
        out["V"][idx] = dt * c.sum()
        out["V_tau"][idx] = dt * c[j_tau:].sum()

    store(0)
    for step in range(1, n + 1):
        vt = dt * c[j_tau:].sum()
        transfer = min(dt * p.sigma1 * phi * vt, phi)
        births = dt * p.beta * rho
        death = 1.0 + dt * p.m * rho
        phi, psi, rho = (phi - transfer + births) / death, (psi + transfer) / death, (rho + births) / death
        u = u / (1.0 + dt * p.sigma2 * psi)
        new = np.empty_like(c)
        new[1:] = s[:-1] * c[:-1]
        new[0] = p.sigma2 * u * psi
        c = new
        store(step)
    return out
