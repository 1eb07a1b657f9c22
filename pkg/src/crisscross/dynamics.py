"""Coupled time stepping of vectors, susceptible hosts and infected cohorts.

One step, in order:

1. infectious host density on the vector habitat (ages beyond the
   incubation period);
2. vector update: the crisscross transfer ``T = dt*sigma1*phi*v_tau``
   (clamped to ``phi``) moves mass from ``phi`` to ``psi``, births
   ``dt*beta*rho`` enter ``phi``, then one implicit solve with the logistic
   death ``m*rho`` folded into the diffusion matrix.  The check field ``rho``
   gets the same solve, so ``phi + psi = rho`` holds to roundoff;
3. susceptible hosts: implicit diffusion, then the implicit infection sink
   ``1 / (1 + dt*sigma2*psi)``;
4. the infected births ``B = sigma2*u*psi`` (zero off the vector habitat)
   enter the youngest cohort, older cohorts shift one age cell;
5. age integrals are refreshed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .age import (
    AgeDensity,
    SurvivalTable,
    age_step,
    age_step_losses,
    integrate_age,
    integrate_age_from,
    seed_initial,
)
from .coeffs import LAB, PAPER, CoefficientSet, InitialData
from .diffusion import DIRECT, DiffusionOperator, DiffusionStep, assemble
from .grid import OMEGA, STAR, Grid, ScalarField, extend_to_omega, integrate, restrict_to_star

logger = logging.getLogger(__name__)


class InvariantError(RuntimeError):
    pass


def incidence_f1(sigma1: ScalarField, phi: ScalarField, v_tau_star: ScalarField) -> ScalarField:
    return phi.with_values(sigma1.values * phi.values * v_tau_star.values)


def birth_B(sigma2: ScalarField, u: ScalarField, psi: ScalarField) -> ScalarField:
    """Infected-host recruitment on the host habitat, zero off the vector habitat."""
    u_star = restrict_to_star(u) if u.tag == OMEGA else u
    return extend_to_omega(psi.with_values(sigma2.values * u_star.values * psi.values), 0.0)


@dataclass(eq=False)
class Model:
    grid: Grid
    coeffs: CoefficientSet
    survival: SurvivalTable
    dt: float
    tau_index: int
    L1: DiffusionOperator
    L2: DiffusionOperator
    host_step: DiffusionStep
    mode: str = PAPER
    solver: str = DIRECT
    cg_tol: float = 1e-10
    invariant_tol: float = 1e-8

    @classmethod
    def build(
        cls,
        grid: Grid,
        coeffs: CoefficientSet,
        dt: float,
        n_cohorts: int,
        tau_index: int,
        mode: str = PAPER,
        solver: str = DIRECT,
        cg_tol: float = 1e-10,
        invariant_tol: float = 1e-8,
    ) -> Model:
        if not dt > 0:
            raise ValueError("dt must be positive")
        if not 0 <= tau_index < n_cohorts:
            raise ValueError(f"incubation index {tau_index} outside [0, {n_cohorts})")
        lab = mode == LAB
        L1 = assemble(grid, STAR, coeffs.d1, allow_zero=lab)
        L2 = assemble(grid, OMEGA, coeffs.d2, allow_zero=lab)
        survival = SurvivalTable.build(coeffs.lam, dt, n_cohorts)
        host_step = DiffusionStep(L2, dt, solver=solver, tol=cg_tol)
        return cls(grid, coeffs, survival, float(dt), int(tau_index), L1, L2, host_step,
                   mode, solver, cg_tol, invariant_tol)

    @property
    def n_cohorts(self) -> int:
        return len(self.survival)

    @property
    def tau(self) -> float:
        return self.tau_index * self.dt

    def vector_step(self, rho: np.ndarray) -> DiffusionStep:
        """Implicit diffusion with the logistic death ``m*rho`` on the diagonal."""
        return DiffusionStep(self.L1, self.dt, self.coeffs.m.values * rho,
                             solver=self.solver, tol=self.cg_tol)


@dataclass(eq=False)
class SimState:
    t: float
    n: int
    phi: ScalarField
    psi: ScalarField
    rho: ScalarField
    u: ScalarField
    i: AgeDensity
    v: ScalarField = field(init=False)
    v_tau: ScalarField = field(init=False)
    tau_index: int = 0

    def __post_init__(self) -> None:
        self.refresh()

    def refresh(self) -> None:
        self.v = integrate_age(self.i)
        self.v_tau = integrate_age_from(self.i, start=self.tau_index)

    def host_total(self) -> float:
        return integrate(self.u) + integrate(self.v)


def initial_state(model: Model, initial: InitialData) -> SimState:
    seed = seed_initial(initial.z0, initial.k, model.dt, model.n_cohorts)
    rho0 = initial.phi0.with_values(initial.phi0.values + initial.psi0.values)
    return SimState(0.0, 0, initial.phi0.copy(), initial.psi0.copy(), rho0,
                    initial.u0.copy(), seed, tau_index=model.tau_index)


@dataclass
class StepReport:
    n: int
    t: float
    mass_residual: float
    host_total: float
    recovered: float
    truncated: float
    clamped_cells: int
    identity_defect: float
    min_value: float
    iterations: dict[str, int] = field(default_factory=dict)

    @property
    def clamped(self) -> bool:
        return self.clamped_cells > 0


def _scale(*fields: ScalarField) -> float:
    return max(float(np.max(np.abs(f.values))) if f.values.size else 0.0 for f in fields)


def step(state: SimState, model: Model) -> tuple[SimState, StepReport]:
    c = model.coeffs
    dt = model.dt
    grid = model.grid

    # (1) infectious hosts seen by the vectors
    vt = restrict_to_star(state.v_tau).values

    # (2) vectors
    phi, psi, rho = state.phi.values, state.psi.values, state.rho.values
    transfer = dt * c.sigma1.values * phi * vt
    clamp = transfer > phi
    transfer = np.where(clamp, phi, transfer)
    births = dt * c.beta.values * rho
    rhs = np.column_stack([phi - transfer + births, psi + transfer, rho + births])
    vstep = model.vector_step(rho)
    out = vstep(rhs)
    phi_new, psi_new, rho_new = (state.phi.with_values(out[:, k].copy()) for k in range(3))

    # (3) susceptible hosts
    host_prev = state.host_total()
    u_diffused = model.host_step(state.u.values)
    sink = extend_to_omega(psi_new.with_values(c.sigma2.values * psi_new.values), 0.0).values
    u_new = state.u.with_values(u_diffused / (1.0 + dt * sink))
    host_iters = model.host_step.iterations

    # (4) infected cohorts
    b = birth_B(c.sigma2, u_new, psi_new)
    recovered, truncated = age_step_losses(state.i, model.survival)
    i_new = age_step(state.i, model.host_step.rows, model.survival, b)

    # (5)
    new = SimState((state.n + 1) * dt, state.n + 1, phi_new, psi_new, rho_new, u_new, i_new,
                   tau_index=state.tau_index)
    host_new = new.host_total()
    residual = host_new - host_prev + recovered + truncated

    defect = float(np.max(np.abs(phi_new.values + psi_new.values - rho_new.values)))
    scale = _scale(phi_new, psi_new, rho_new, u_new, new.v)
    min_value = min(float(np.min(f.values)) for f in (phi_new, psi_new, rho_new, u_new))
    min_value = min(min_value, float(np.min(i_new.cohorts)))
    report = StepReport(
        n=new.n,
        t=new.t,
        mass_residual=residual,
        host_total=host_new,
        recovered=recovered,
        truncated=truncated,
        clamped_cells=int(clamp.sum()),
        identity_defect=defect,
        min_value=min_value,
        iterations={"vector": vstep.iterations, "host": host_iters,
                    "cohorts": model.host_step.iterations},
    )
    if report.clamped:
        logger.warning("step %d: transfer clamped on %d cells", new.n, report.clamped_cells)

    rho_scale = float(np.max(np.abs(rho_new.values)))
    if defect > model.invariant_tol * rho_scale:
        raise InvariantError(
            f"step {new.n}: |phi + psi - rho| = {defect:.3e} exceeds "
            f"{model.invariant_tol:g} * {rho_scale:.3e}"
        )
    if min_value < -1e-12 * max(scale, 1.0):
        raise InvariantError(f"step {new.n}: negative value {min_value:.3e}")
    U_prev, U_new = integrate(state.u), integrate(u_new)
    slack = 1e-12 if model.solver == DIRECT else 10 * model.cg_tol
    if U_new > U_prev + slack * max(U_prev, 1.0):
        raise InvariantError(f"step {new.n}: susceptible host total grew {U_prev!r} -> {U_new!r}")
    return new, report


def n_steps_for(t_end: float, dt: float) -> int:
    q = t_end / dt
    n = int(round(q))
    if abs(q - n) > 1e-9 * max(1.0, q):
        raise ValueError(f"t_end = {t_end} is not a multiple of dt = {dt}")
    return n


def run(
    model: Model,
    state: SimState,
    t_end: float,
    output_every: int = 1,
    rho_star: ScalarField | None = None,
    on_step=None,
):
    """Step from ``state`` to ``t_end``; returns ``(series, final_state)``.

    A record is written at the start, every ``output_every`` steps and at
    the end.  The mass residual and clamp flag of a record summarise every
    step since the previous one (largest residual in absolute value).
    """
    from .diagnostics import DiagnosticsSeries, cross_check_v, record

    if output_every < 1:
        raise ValueError("output_every must be >= 1")
    n_total = n_steps_for(t_end - state.t, model.dt) if t_end > state.t else 0
    series = DiagnosticsSeries()
    series.append(record(state, rho_star))
    worst, clamped = 0.0, False
    for k in range(1, n_total + 1):
        state, rep = step(state, model)
        if on_step is not None:
            on_step(state, rep)
        if abs(rep.mass_residual) > abs(worst):
            worst = rep.mass_residual
        clamped = clamped or rep.clamped
        if k % output_every == 0 or k == n_total:
            series.append(record(state, rho_star, mass_residual=worst, clamped=clamped))
            worst, clamped = 0.0, False
            if len(series) % 100 == 0:
                gap = cross_check_v(state)
                if gap > 1e-12 * max(1.0, float(np.max(state.v.values))):
                    raise InvariantError(f"cached age integral drifted by {gap:.3e}")
    return series, state
