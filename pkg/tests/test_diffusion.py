from __future__ import annotations

import numpy as np
import pytest

from crisscross.diffusion import (
    PCG,
    DiffusionStep,
    SolverError,
    assemble,
    harmonic_mean,
    solve_spd,
    step_backward_euler,
)
from crisscross.grid import OMEGA, STAR, ScalarField, build_grid

# (2 - 2 cos(pi h)) / h^2 with h = 1/16, dt = 0.1: 1 / (1 + dt mu1), from mpmath
COSINE_FACTOR_16 = 0.50408468811755894064


@pytest.fixture
def grid():
    return build_grid(1.0, 1.0, 16, 16, (0.2, 0.8, 0.3, 0.7), (0.4, 0.6, 0.4, 0.6))


def variable_d(grid, tag):
    x, y = grid.cell_centers(tag)
    return ScalarField(grid, tag, 0.5 + x * y + 0.3 * np.sin(3 * x))


def test_three_cell_stencil():
    # a strip of three star cells in a 5x3 grid; d = 1
    g = build_grid(5.0, 3.0, 5, 3, (1.0, 4.0, 1.2, 1.8), (2.2, 2.8, 1.2, 1.8))
    assert g.n_active(STAR) == 3
    op = assemble(g, STAR, ScalarField.constant(g, STAR, 1.0))
    np.testing.assert_array_equal(op.apply(np.array([0.0, 1.0, 0.0])), [1.0, -2.0, 1.0])


def test_single_cell_operator_is_zero():
    g = build_grid(3.0, 3.0, 3, 3, (1.2, 1.8, 1.2, 1.8), (1.2, 1.8, 1.2, 1.8))
    op = assemble(g, STAR, ScalarField.constant(g, STAR, 2.0))
    assert op.matrix.shape == (1, 1) and op.matrix.nnz in (0, 1)
    assert op.matrix.toarray()[0, 0] == 0.0
    # one cell with a sink: scalar division
    step = DiffusionStep(op, 0.5, sink=np.array([2.0]))
    assert step(np.array([4.0]))[0] == pytest.approx(2.0, rel=1e-15)


@pytest.mark.parametrize("tag", [OMEGA, STAR])
def test_structure(grid, tag):
    A = assemble(grid, tag, variable_d(grid, tag)).matrix
    assert abs(A - A.T).max() == 0.0
    assert np.max(np.abs(A @ np.ones(A.shape[0]))) < 1e-12 * np.abs(A.diagonal()).max()
    off = A.tolil(copy=True)
    off.setdiag(0)
    assert off.tocsr().data.min() > 0
    assert np.all(A.diagonal() < 0)


def test_harmonic_mean():
    np.testing.assert_allclose(harmonic_mean(np.array([1.0, 2.0, 0.0]), np.array([3.0, 2.0, 0.0])),
                               [1.5, 2.0, 0.0])


def test_nonpositive_diffusivity_rejected(grid):
    d = ScalarField.constant(grid, STAR, 1.0)
    d.values[3] = 0.0
    with pytest.raises(ValueError, match="nonpositive"):
        assemble(grid, STAR, d)
    assemble(grid, STAR, d, allow_zero=True)


def test_cosine_mode(grid):
    op = assemble(grid, OMEGA, ScalarField.constant(grid, OMEGA, 1.0))
    x, _ = grid.cell_centers(OMEGA)
    w = np.cos(np.pi * x)
    out = DiffusionStep(op, 0.1)(w)
    np.testing.assert_allclose(out, COSINE_FACTOR_16 * w, rtol=0, atol=1e-12)


@pytest.mark.parametrize("solver", ["direct", PCG])
def test_conservation_positivity_max_principle(grid, solver):
    rng = np.random.default_rng(7)
    op = assemble(grid, OMEGA, variable_d(grid, OMEGA))
    w = rng.random(op.size)
    out = DiffusionStep(op, 0.3, solver=solver, tol=1e-12)(w)
    assert abs(out.sum() - w.sum()) <= 1e-10 * w.sum()
    assert out.min() >= w.min() - 1e-10 and out.max() <= w.max() + 1e-10
    assert out.min() >= -1e-12


def test_constants_are_stationary(grid):
    op = assemble(grid, STAR, variable_d(grid, STAR))
    out = DiffusionStep(op, 5.0)(np.full(op.size, 3.0))
    np.testing.assert_allclose(out, 3.0, rtol=1e-12)


def test_pcg_matches_direct_and_recovers_known_solution(grid):
    op = assemble(grid, OMEGA, variable_d(grid, OMEGA))
    rng = np.random.default_rng(1)
    w = rng.random(op.size)
    direct = DiffusionStep(op, 0.2)
    rhs = direct.matrix @ w
    x, iters = solve_spd(direct.matrix, rhs, tol=1e-12)
    assert iters > 0
    np.testing.assert_allclose(x, w, rtol=1e-9)
    np.testing.assert_allclose(direct(rhs), w, rtol=1e-12)


def test_pcg_multiple_columns(grid):
    op = assemble(grid, STAR, variable_d(grid, STAR))
    step = DiffusionStep(op, 0.2, solver=PCG, tol=1e-12)
    rng = np.random.default_rng(2)
    W = rng.random((op.size, 3))
    out = step(W)
    for k in range(3):
        np.testing.assert_allclose(out[:, k], step(W[:, k]), rtol=1e-10)


def test_pcg_identity_system():
    import scipy.sparse as sp

    x, iters = solve_spd(sp.identity(4, format="csr"), np.arange(4.0))
    np.testing.assert_array_equal(x, np.arange(4.0))
    assert iters <= 1


def test_pcg_iteration_cap(grid):
    op = assemble(grid, OMEGA, variable_d(grid, OMEGA))
    step = DiffusionStep(op, 10.0)
    with pytest.raises(SolverError, match="did not converge"):
        solve_spd(step.matrix, np.random.default_rng(0).random(op.size), tol=1e-14, maxiter=2)


def test_zero_dt_returns_input(grid):
    op = assemble(grid, STAR, variable_d(grid, STAR))
    w = np.arange(op.size, dtype=float)
    np.testing.assert_array_equal(DiffusionStep(op, 0.0)(w), w)


def test_rows_match_columns(grid):
    op = assemble(grid, OMEGA, variable_d(grid, OMEGA))
    step = DiffusionStep(op, 0.1)
    stack = np.random.default_rng(3).random((4, op.size))
    np.testing.assert_allclose(step.rows(stack), step(stack.T).T, rtol=1e-15)


def test_backward_euler_sink(grid):
    op = assemble(grid, STAR, ScalarField.constant(grid, STAR, 1.0))
    w = ScalarField.constant(grid, STAR, 2.0)
    out = step_backward_euler(op, w, 0.5, sink_rate=3.0)
    np.testing.assert_allclose(out.values, 2.0 / 2.5, rtol=1e-14)
    with pytest.raises(ValueError):
        step_backward_euler(op, w, 0.0)
