from __future__ import annotations

import numpy as np
import pytest
from conftest import SMALL, merged, small_problem

from crisscross.coeffs import LAB, evaluate_field, normalize_k
from crisscross.config import Config, ConfigError
from crisscross.expression import EvaluationError, parse
from crisscross.grid import OMEGA, STAR, ScalarField, build_grid, integrate


@pytest.fixture
def grid():
    return build_grid(1.0, 1.0, 4, 4, (0.3, 0.7, 0.3, 0.7), (0.3, 0.5, 0.3, 0.5))


def test_evaluate_field_at_centres(grid):
    f = evaluate_field(parse("x + 10*y"), grid, STAR)
    np.testing.assert_allclose(f.values, [0.375 + 3.75, 0.375 + 6.25, 0.625 + 3.75, 0.625 + 6.25])


def test_constant_field_broadcasts(grid):
    f = evaluate_field(parse("2"), grid, OMEGA)
    assert f.values.shape == (16,)


def test_evaluation_error_names_the_cell(grid):
    with pytest.raises(EvaluationError, match=r"ix=1, iy=1"):
        evaluate_field(parse("1/(x - 0.375)"), grid, STAR)


def test_normalize_k(grid):
    raw = ScalarField(grid, OMEGA, np.linspace(0, 1, 16))
    assert integrate(normalize_k(raw)) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        normalize_k(ScalarField.zeros(grid, OMEGA))


def test_k_confined_to_seeding_region(small):
    k = small.initial.k.to_array()
    assert np.all(k[~small.grid.mask_starstar] == 0)
    assert integrate(small.initial.k) == pytest.approx(1.0, rel=1e-14)


def test_floors(small):
    c = small.coeffs
    assert c.m_star == pytest.approx(1.0) and c.lambda_star == pytest.approx(1.0)
    assert c.beta_star == pytest.approx(float(c.beta.values.min()))
    assert c.d_star < float(c.d1.values.min())


@pytest.mark.parametrize(
    "section,key,value,code",
    [
        ("coefficients", "d1", "0", "A0"),
        ("initial", "z0", "1 + a", "A1"),
        ("initial", "z0", "-a", "A1"),
        ("coefficients", "sigma1", "0", "A3"),
        ("coefficients", "m", "x - 0.5", "A4"),
        ("age", "lambda", "a - 0.1", "A5"),
        ("initial", "u0", "0", "A6"),
        ("initial", "k", "-1", "A2"),
    ],
)
def test_each_assumption_is_checked(section, key, value, code):
    with pytest.raises(ConfigError, match=code):
        small_problem(**{section: {key: value}})


def test_psi0_only_in_lab_mode():
    with pytest.raises(ConfigError, match="lab mode"):
        small_problem(initial={"psi0": "0.1"})
    p = small_problem(mode=LAB, initial={"psi0": "0.1"})
    np.testing.assert_allclose(p.initial.psi0.values, 0.1)
    small_problem(initial={"psi0": "0"})


def test_lab_mode_relaxes_host_diffusion_and_recovery():
    p = small_problem(mode=LAB, coefficients={"d2": "0"}, age={"lambda": "0*a", "a_max": 0.4})
    assert p.assumptions.ok
    with pytest.raises(ConfigError, match="A0"):
        small_problem(coefficients={"d2": "0"})


def test_missing_keys_all_named():
    data = merged(SMALL)
    del data["coefficients"]["sigma1"]
    del data["time"]["dt"]
    with pytest.raises(ConfigError) as info:
        Config.from_dict(data)
    text = str(info.value)
    assert "sigma1" in text and "dt" in text


def test_wrong_types_reported():
    with pytest.raises(ConfigError, match="wrong type"):
        Config.from_dict(merged(SMALL, domain={"nx": 4.5}))
