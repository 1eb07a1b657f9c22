"""Command line: ``crisscross run|steady|verify --config FILE``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .checks import run_checks
from .config import ConfigError, Problem, build_problem, load_config
from .diagnostics import fmt
from .dynamics import InvariantError, run
from .diffusion import SolverError
from .grid import OMEGA, STAR, ScalarField
from .steady import SteadyState, detect_limits, solve_rho_star

logger = logging.getLogger("crisscross")


def _load(path: str) -> Problem:
    return build_problem(load_config(path, validate=False))


def _steady(problem: Problem) -> SteadyState:
    cfg = problem.config
    return solve_rho_star(problem.coeffs, problem.grid, tol=cfg.steady_tol, solver=cfg.linear_solver)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([str(row[0]), str(row[1])] + [fmt(x) for x in row[2:]])


def write_final_state(path: Path, state) -> None:
    grid = state.u.grid
    arrays = [state.phi.to_array(), state.psi.to_array(), state.u.to_array(),
              state.v.to_array(), state.v_tau.to_array()]
    rows = ((ix, iy, *(a[ix, iy] for a in arrays))
            for ix in range(grid.nx) for iy in range(grid.ny) if grid.mask_omega[ix, iy])
    _write_rows(path, ["ix", "iy", "phi", "psi", "u", "v", "v_tau"], rows)


def write_rho_star(path: Path, rho: ScalarField) -> None:
    ix, iy = rho.grid.cell_indices(STAR)
    _write_rows(path, ["ix", "iy", "rho_star"], zip(ix, iy, rho.values))


def cmd_run(args) -> int:
    problem = _load(args.config)
    cfg = problem.config
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    steady = _steady(problem)
    series, final = run(problem.model, problem.initial_state(), cfg.t_end,
                        output_every=cfg.output_every, rho_star=steady.rho)
    series.to_csv(out / "series.csv")
    write_final_state(out / "final_state.csv", final)
    sigma2_norm = float(np.max(problem.coeffs.sigma2.values))
    report = detect_limits(series, steady.rho, sigma2_norm=sigma2_norm)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8", newline="")
    print(f"{len(series)} records to t = {fmt(final.t)}; output in {out}")
    return 0


def cmd_steady(args) -> int:
    problem = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    steady = _steady(problem)
    write_rho_star(out / "rho_star.csv", steady.rho)
    lines = [
        f"residual_linf = {fmt(steady.residual)}",
        f"march_steps = {steady.march_steps}",
        f"march_dt = {fmt(steady.march_dt)}",
        f"newton_polish = {'true' if steady.polished else 'false'}",
    ]
    (out / "residual.txt").write_text("\n".join(lines) + "\n", encoding="utf-8", newline="")
    print(f"residual {steady.residual:.3e}; output in {out}")
    return 0


def cmd_verify(args) -> int:
    problem = _load(args.config)
    results = run_checks(problem, args.steps)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crisscross", description="Vector-host epidemic simulator")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, needs_out in (("run", cmd_run, True), ("steady", cmd_steady, True),
                                ("verify", cmd_verify, False)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        if needs_out:
            sp.add_argument("--out", required=True)
        if name == "verify":
            sp.add_argument("--steps", type=int, default=None,
                            help="trajectory length for the stepper checks")
        sp.set_defaults(func=fn)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, SolverError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
