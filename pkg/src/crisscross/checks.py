"""Oracle checks run by ``crisscross verify`` on a configured problem."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .coeffs import CoefficientSet
from .config import Problem
from .diffusion import DiffusionStep, assemble
from .dynamics import Model, step
from .grid import OMEGA, ScalarField, integrate
from .oracle import ODEParams, logistic_exact, ode_reduction, represent_i, v_tau_first_interval


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale if a.size else 0.0


def check_operator(problem: Problem) -> CheckResult:
    worst = {}
    for name, op in (("d1", problem.model.L1), ("d2", problem.model.L2)):
        A = op.matrix
        off = A.tolil(copy=True)
        off.setdiag(0)
        off = off.tocsr()
        diag_scale = max(float(np.max(np.abs(A.diagonal()))), 1.0)
        worst[name] = max(
            float(abs(A - A.T).max()) if A.nnz else 0.0,
            float(np.max(np.abs(A @ np.ones(A.shape[0])))) / diag_scale,
        )
        if off.nnz and off.data.min() < 0:
            return CheckResult("operator structure", False, f"negative off-diagonal in {name}")
        if np.any(A.diagonal() > 0):
            return CheckResult("operator structure", False, f"positive diagonal in {name}")
    ok = all(v <= 1e-13 for v in worst.values())
    return CheckResult("operator structure", ok,
                       "symmetry / row-sum defects " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def check_cosine_mode(problem: Problem) -> CheckResult:
    g = problem.grid
    dt = problem.model.dt
    op = assemble(g, OMEGA, ScalarField.constant(g, OMEGA, 1.0))
    x, _ = g.cell_centers(OMEGA)
    w = np.cos(np.pi * x / g.Lx)
    h = g.h
    mu1 = (2.0 - 2.0 * np.cos(np.pi * h / g.Lx)) / h**2
    got = DiffusionStep(op, dt)(w)
    err = _rel(got, w / (1.0 + dt * mu1))
    return CheckResult("cosine mode decay", err <= 1e-10, f"relative error {err:.2e}")


def _scaled_sigma2(model: Model, factor: float) -> Model:
    c: CoefficientSet = model.coeffs
    sigma2 = c.sigma2.with_values(c.sigma2.values * factor)
    return dataclasses.replace(model, coeffs=dataclasses.replace(c, sigma2=sigma2))


def check_trajectory(problem: Problem, n_steps: int | None = None) -> list[CheckResult]:
    model = problem.model
    j_tau = model.tau_index
    n_steps = n_steps if n_steps is not None else max(20, j_tau + 5)
    state = problem.initial_state()
    seed = state.i.copy()
    births: list = [None]
    vt_series = [state.v_tau.values.copy()]
    reports = []
    totals = [state.host_total()]
    U = [integrate(state.u)]
    worst_oracle = 0.0
    for n in range(1, n_steps + 1):
        state, rep = step(state, model)
        reports.append(rep)
        births.append(state.i.cohorts[0].copy())
        vt_series.append(state.v_tau.values.copy())
        totals.append(state.host_total())
        U.append(integrate(state.u))
        J = model.n_cohorts
        for j in sorted({0, 1, n - 1, n, n + 1, j_tau, J - 1}):
            if 0 <= j < J:
                ref = represent_i(model.host_step, model.survival, seed, births, n, j).values
                worst_oracle = max(worst_oracle, _rel(state.i.cohorts[j], ref))

    out = [CheckResult("cohort representation", worst_oracle <= 1e-12,
                       f"max relative gap {worst_oracle:.2e} over {n_steps} steps")]

    window = min(j_tau, n_steps)
    gap = 0.0
    for n in range(window + 1):
        ref = v_tau_first_interval(seed, model.host_step, model.survival, model.tau, n).values
        gap = max(gap, _rel(vt_series[n], ref))
    out.append(CheckResult("incubation-window decoupling", gap <= 1e-12,
                           f"max relative gap {gap:.2e} over {window} steps"))

    boosted = _scaled_sigma2(model, 10.0)
    alt = problem.initial_state()
    gap = _rel(alt.v_tau.values, vt_series[0])
    for n in range(1, window + 1):
        alt, _ = step(alt, boosted)
        gap = max(gap, _rel(alt.v_tau.values, vt_series[n]))
    out.append(CheckResult("sigma2 invariance before tau", gap <= 1e-12,
                           f"max relative gap {gap:.2e}"))

    ident = max(r.identity_defect for r in reports)
    out.append(CheckResult("phi + psi = rho", ident <= model.invariant_tol,
                           f"max defect {ident:.2e}"))
    ledger = max(abs(r.mass_residual) / max(t, 1e-300) for r, t in zip(reports, totals))
    out.append(CheckResult("host mass ledger", ledger <= 1e-10, f"max relative residual {ledger:.2e}"))
    dU = float(np.diff(U).max())
    dW = float(np.diff(totals).max())
    out.append(CheckResult("monotone host totals", dU <= 1e-10 * U[0] and dW <= 1e-10 * totals[0],
                           f"max increase U {dU:.2e}, U+V {dW:.2e}"))
    low = min(r.min_value for r in reports)
    out.append(CheckResult("positivity", low >= -1e-12, f"min value {low:.2e}"))
    return out


def check_logistic_order() -> CheckResult:
    beta, m, rho0, T = 2.0, 1.0, 0.1, 2.0
    errs = []
    for dt in (0.1, 0.05, 0.025):
        p = ODEParams(beta=beta, m=m, sigma1=0.0, sigma2=0.0, phi0=rho0, u0=1.0,
                      z0=lambda a: 0.0 * a, lam=lambda a: 1.0 + 0.0 * a, tau=0.0, n_cohorts=4)
        traj = ode_reduction(p, dt, int(round(T / dt)))
        errs.append(abs(traj["rho"][-1] - logistic_exact(rho0, beta, m, T)))
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    return CheckResult("logistic temporal order", min(orders) >= 0.9,
                       "observed orders " + ", ".join(f"{o:.3f}" for o in orders))


def run_checks(problem: Problem, n_steps: int | None = None) -> list[CheckResult]:
    results = [check_operator(problem), check_cosine_mode(problem)]
    results += check_trajectory(problem, n_steps)
    results.append(check_logistic_order())
    return results
