from __future__ import annotations

import numpy as np
import pytest

from crisscross.grid import (
    OMEGA,
    STAR,
    GridError,
    ScalarField,
    build_grid,
    extend_to_omega,
    integrate,
    restrict_to_star,
)


@pytest.fixture
def grid():
    return build_grid(1.0, 1.0, 8, 8, (0.25, 0.75, 0.25, 0.75), (0.4, 0.6, 0.4, 0.6))


def test_masks_and_counts(grid):
    assert grid.n_active(OMEGA) == 64
    assert grid.n_active(STAR) == 16
    assert grid.mask_starstar.sum() == 4
    assert grid.h == 0.125 and grid.area == 1.0


def test_star_cells_are_inside_omega_storage(grid):
    pos = grid.star_in_omega()
    ix, iy = grid.cell_indices(OMEGA)
    assert np.all(grid.mask_star[ix[pos], iy[pos]])


def test_constant_integrates_to_area(grid):
    assert integrate(ScalarField.constant(grid, OMEGA, 1.0)) == pytest.approx(1.0, rel=1e-15)
    assert integrate(ScalarField.constant(grid, STAR, 2.0)) == pytest.approx(2 * 16 / 64, rel=1e-15)


def test_extend_then_restrict_round_trip(grid):
    f = ScalarField(grid, STAR, np.arange(16.0))
    g = extend_to_omega(f, fill=-1.0)
    assert g.tag == OMEGA
    assert np.sum(g.values == -1.0) == 64 - 16
    np.testing.assert_array_equal(restrict_to_star(g).values, f.values)


def test_to_array_fills_outside(grid):
    arr = ScalarField.constant(grid, STAR, 3.0).to_array()
    assert np.isnan(arr[0, 0]) and arr[3, 3] == 3.0


def test_wrong_tag_rejected(grid):
    with pytest.raises(GridError):
        extend_to_omega(ScalarField.zeros(grid, OMEGA))
    with pytest.raises(GridError):
        integrate(ScalarField.zeros(grid, STAR), mask=OMEGA)


def test_field_shape_checked(grid):
    with pytest.raises(ValueError):
        ScalarField(grid, STAR, np.zeros(5))


@pytest.mark.parametrize(
    "star,starstar,match",
    [
        ((0.0, 0.5, 0.2, 0.8), (0.3, 0.4, 0.3, 0.4), "outer boundary"),
        ((0.15, 0.3, 0.2, 0.8), (0.3, 0.4, 0.3, 0.4), None),
        ((0.25, 0.75, 0.25, 0.75), (0.0, 1.0, 0.0, 1.0), "strictly smaller"),
        ((0.25, 0.75, 0.25, 0.75), (0.01, 0.02, 0.01, 0.02), "no cell centre"),
    ],
)
def test_habitat_validation(star, starstar, match):
    if match is None:
        build_grid(1.0, 1.0, 8, 8, star, starstar)
        return
    with pytest.raises(GridError, match=match):
        build_grid(1.0, 1.0, 8, 8, star, starstar)


def test_non_square_cells_rejected():
    with pytest.raises(GridError, match="square"):
        build_grid(1.0, 2.0, 8, 8, (0.25, 0.75, 0.25, 0.75), (0.4, 0.6, 0.4, 0.6))


def test_small_grid_rejected():
    with pytest.raises(GridError):
        build_grid(1.0, 1.0, 2, 2, (0.4, 0.6, 0.4, 0.6), (0.4, 0.6, 0.4, 0.6))
