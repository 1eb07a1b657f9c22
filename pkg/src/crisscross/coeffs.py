"""Coefficient fields, seeding data and the admissibility checks on them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .expression import EvaluationError, ExpressionError, Node, compile_expression, evaluate
from .grid import OMEGA, STAR, Grid, ScalarField, integrate

FLOOR_SLACK = 1e-12

PAPER = "paper"
LAB = "lab"

SPATIAL = frozenset({"x", "y"})
AGE = frozenset({"a"})

STAR_COEFFS = ("d1", "beta", "m", "sigma1", "sigma2")


def evaluate_field(expr: Node, grid: Grid, mask: str) -> ScalarField:
    """Evaluate an ``x, y`` expression at the active cell centres of ``mask``."""
    x, y = grid.cell_centers(mask)
    try:
        values = evaluate(expr, x=x, y=y)
    except EvaluationError as exc:
        if exc.index is None:
            raise
        ix, iy = grid.cell_indices(mask)
        k = exc.index
        raise EvaluationError(
            f"{exc} at cell (ix={ix[k]}, iy={iy[k]}), centre ({x[k]:.6g}, {y[k]:.6g})",
            exc.index,
        ) from None
    return ScalarField(grid, mask, np.broadcast_to(values, x.shape).astype(float))


def normalize_k(raw_k: ScalarField) -> ScalarField:
    """Scale the seeding density so its midpoint-rule integral is one."""
    if raw_k.tag != OMEGA:
        raise ValueError("k lives on the host habitat")
    total = integrate(raw_k)
    if not total > 0:
        raise ValueError("k is identically zero (or negative) and cannot be normalised")
    return raw_k.with_values(raw_k.values / total)


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    d1: ScalarField
    d2: ScalarField
    beta: ScalarField
    m: ScalarField
    sigma1: ScalarField
    sigma2: ScalarField
    lam: Node
    d_star: float
    m_star: float
    beta_star: float
    lambda_star: float

    def lam_at(self, a: np.ndarray | float) -> np.ndarray | float:
        return evaluate(self.lam, a=a)


def lambda_floor(lam: Node, ages: np.ndarray) -> float:
    return float(np.min(evaluate(lam, a=np.asarray(ages, dtype=float)))) - FLOOR_SLACK


def build_coefficients(
    texts: dict[str, str], grid: Grid, lambda_ages: np.ndarray
) -> CoefficientSet:
    """Parse and evaluate every coefficient; floors are read off the fields."""
    fields = {}
    for name in STAR_COEFFS:
        fields[name] = evaluate_field(compile_expression(texts[name], SPATIAL), grid, STAR)
    fields["d2"] = evaluate_field(compile_expression(texts["d2"], SPATIAL), grid, OMEGA)
    lam = compile_expression(texts["lambda"], AGE)
    d_min = min(fields["d1"].values.min(), fields["d2"].values.min())
    return CoefficientSet(
        lam=lam,
        d_star=float(d_min) - FLOOR_SLACK,
        m_star=float(fields["m"].values.min()) - FLOOR_SLACK,
        beta_star=float(fields["beta"].values.min()) - FLOOR_SLACK,
        lambda_star=lambda_floor(lam, lambda_ages),
        **fields,
    )


@dataclass(frozen=True, eq=False)
class InitialData:
    u0: ScalarField
    phi0: ScalarField
    psi0: ScalarField
    z0: Node
    k: ScalarField
    k_raw: ScalarField

    def z0_at(self, a: np.ndarray | float) -> np.ndarray | float:
        return evaluate(self.z0, a=a)


def build_initial_data(texts: dict[str, str], grid: Grid) -> InitialData:
    """Evaluate the initial fields; ``k`` is confined to the seeding region."""
    u0 = evaluate_field(compile_expression(texts["u0"], SPATIAL), grid, OMEGA)
    phi0 = evaluate_field(compile_expression(texts["phi0"], SPATIAL), grid, STAR)
    psi0 = evaluate_field(compile_expression(texts.get("psi0", "0"), SPATIAL), grid, STAR)
    z0 = compile_expression(texts["z0"], AGE)
    k_raw = evaluate_field(compile_expression(texts["k"], SPATIAL), grid, OMEGA)
    k_raw = k_raw.with_values(np.where(grid.mask_starstar.ravel(), k_raw.values, 0.0))
    try:
        k = normalize_k(k_raw)
    except ValueError:
        k = k_raw
    return InitialData(u0=u0, phi0=phi0, psi0=psi0, z0=z0, k=k, k_raw=k_raw)


@dataclass
class AssumptionReport:
    mode: str
    results: dict[str, tuple[bool, str]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(passed for passed, _ in self.results.values())

    def failures(self) -> list[str]:
        return [f"{k}: {msg}" for k, (passed, msg) in self.results.items() if not passed]

    def __str__(self) -> str:
        lines = [f"assumption checks ({self.mode} mode)"]
        for key, (passed, msg) in self.results.items():
            lines.append(f"  {key}  {'pass' if passed else 'FAIL'}  {msg}")
        return "\n".join(lines)


def validate_assumptions(
    coeffs: CoefficientSet,
    grid: Grid,
    initial: InitialData,
    ages: np.ndarray,
    mode: str = PAPER,
) -> AssumptionReport:
    """Check A0-A6 on the evaluated data; report only, never raises.

    ``ages`` are the sample points used for the age-dependent data (cohort
    midpoints are the natural choice).  Lab mode tolerates a zero recovery
    rate, a zero host diffusivity and a nonzero initial infected-vector field.
    """
    lab = mode == LAB
    rep = AssumptionReport(mode)
    res = rep.results

    d1_min = float(coeffs.d1.values.min())
    d2_min = float(coeffs.d2.values.min())
    a0 = d1_min > 0 and (d2_min >= 0 if lab else d2_min > 0)
    res["A0"] = (a0, f"min d1 = {d1_min:.6g}, min d2 = {d2_min:.6g}")

    ages = np.asarray(ages, dtype=float)
    msgs = []
    a1 = True
    try:
        z = np.asarray(initial.z0_at(ages), dtype=float)
        z_at_0 = float(initial.z0_at(0.0))
    except ExpressionError as exc:
        z, z_at_0, a1 = np.zeros(1), np.nan, False
        msgs.append(f"z0 does not evaluate: {exc}")
    if a1:
        if (z < 0).any():
            a1 = False
            msgs.append(f"z0 negative (min {z.min():.3g})")
        if not (z > 0).any():
            a1 = False
            msgs.append("z0 is trivial")
        if abs(z_at_0) > FLOOR_SLACK:
            a1 = False
            msgs.append(f"z0(0) = {z_at_0:.6g}, must vanish")
        if len(ages) > 1:
            da = ages[1] - ages[0]
            if not np.isfinite(da * z.sum()):
                a1 = False
                msgs.append("z0 not integrable on the age grid")
    res["A1"] = (a1, "; ".join(msgs) or f"max z0 = {z.max():.6g}")

    k = initial.k_raw.values
    outside = ~grid.mask_starstar.ravel()
    msgs = []
    if (k < 0).any():
        msgs.append("k negative somewhere")
    if np.any(k[outside] != 0):
        msgs.append("k nonzero outside the seeding region")
    if not (k > 0).any():
        msgs.append("k is identically zero, not normalisable")
    else:
        total = integrate(initial.k)
        if abs(total - 1.0) > 1e-12:
            msgs.append(f"normalised k integrates to {total!r}")
    res["A2"] = (not msgs, "; ".join(msgs) or "k >= 0, supported in the seeding region, unit mass")

    s1, s2 = coeffs.sigma1.values.min(), coeffs.sigma2.values.min()
    res["A3"] = (s1 > 0 and s2 > 0, f"min sigma1 = {s1:.6g}, min sigma2 = {s2:.6g}")

    res["A4"] = (
        coeffs.m_star > 0 and coeffs.beta_star > 0,
        f"m_star = {coeffs.m_star:.6g}, beta_star = {coeffs.beta_star:.6g}",
    )

    lam_ok = coeffs.lambda_star >= -FLOOR_SLACK if lab else coeffs.lambda_star > 0
    res["A5"] = (lam_ok, f"lambda_star = {coeffs.lambda_star:.6g}")

    msgs = []
    for name, f in (("u0", initial.u0), ("phi0", initial.phi0)):
        if (f.values < 0).any():
            msgs.append(f"{name} negative somewhere")
        if not (f.values > 0).any():
            msgs.append(f"{name} is trivial")
    psi0 = initial.psi0.values
    if (psi0 < 0).any():
        msgs.append("psi0 negative somewhere")
    if not lab and (psi0 != 0).any():
        msgs.append("psi0 must vanish in paper mode")
    res["A6"] = (not msgs, "; ".join(msgs) or "u0, phi0 nonnegative and nontrivial")
    return rep
