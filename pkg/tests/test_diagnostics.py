from __future__ import annotations

import math

import numpy as np
import pytest

from crisscross.diagnostics import COLUMNS, DiagnosticsSeries, cross_check_v, norm, record
from crisscross.dynamics import run
from crisscross.grid import OMEGA, ScalarField, build_grid


def test_two_cell_norms():
    v = np.array([3.0, -4.0])
    assert norm(v, "L1", 0.5) == 3.5
    assert norm(v, "L2", 0.5) == math.sqrt(12.5)
    assert norm(v, "Linf") == 4.0


def test_unit_field_norms():
    g = build_grid(1.0, 1.0, 4, 4, (0.3, 0.7, 0.3, 0.7), (0.3, 0.5, 0.3, 0.5))
    one = ScalarField.constant(g, OMEGA, 1.0)
    for kind in ("L1", "L2", "Linf"):
        assert norm(one, kind) == pytest.approx(1.0, rel=1e-15)
    assert norm(one.with_values(-3.0 * one.values), "L2") == pytest.approx(3.0, rel=1e-15)


def test_norm_errors():
    with pytest.raises(ValueError):
        norm(np.ones(2), "L1")
    with pytest.raises(ValueError):
        norm(np.ones(2), "L3", 1.0)


def test_record_columns(small):
    row = record(small.initial_state())
    assert tuple(row) == COLUMNS
    assert math.isnan(row["phi_minus_rho_star_linf"])
    assert row["psi_l1"] == 0.0 and row["V"] > 0
    assert row["u_bar"] == pytest.approx(row["U"])  # unit square


def test_constant_u_has_zero_spread(small):
    s = small.initial_state()
    s.u = s.u.with_values(np.full_like(s.u.values, 2.5))
    assert record(s)["u_minus_ubar_l2"] == pytest.approx(0.0, abs=1e-15)


def test_series_rejects_non_increasing_time(small):
    row = record(small.initial_state())
    series = DiagnosticsSeries([row])
    with pytest.raises(ValueError):
        series.append(row)


def test_csv_round_trip(small, tmp_path):
    series, _ = run(small.model, small.initial_state(), 0.5, output_every=2)
    path = tmp_path / "s.csv"
    text = series.to_csv(path)
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert "\r" not in path.read_text()
    back = DiagnosticsSeries.from_csv(path)
    for c in COLUMNS:
        np.testing.assert_array_equal(back[c], series[c])


def test_cross_check(small):
    _, final = run(small.model, small.initial_state(), 0.5)
    assert cross_check_v(final) <= 1e-15


def test_hoelder_chain(small):
    rng = np.random.default_rng(5)
    g = small.grid
    for _ in range(10):
        w = ScalarField(g, OMEGA, rng.normal(size=g.n_active(OMEGA)))
        l1, l2, linf = norm(w, "L1"), norm(w, "L2"), norm(w, "Linf")
        assert l1 <= math.sqrt(g.area) * l2 * (1 + 1e-12)
        assert l2 <= math.sqrt(g.area) * linf * (1 + 1e-12)
