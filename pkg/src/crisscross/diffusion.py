"""Divergence-form diffusion with zero-flux walls on a masked subdomain.

Faces between two active cells carry the conductance
``harmonic_mean(d_left, d_right) / h**2``; faces on the mask boundary carry
none, which is the discrete no-flux condition.  The resulting matrix is
symmetric, has zero row sums and nonnegative off-diagonals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import Grid, ScalarField

DIRECT = "direct"
PCG = "pcg"


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiffusionOperator:
    grid: Grid
    tag: str
    matrix: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, w: ScalarField | np.ndarray) -> np.ndarray:
        values = w.values if isinstance(w, ScalarField) else w
        return self.matrix @ values


def harmonic_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s = a + b
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(s > 0, 2.0 * a * b / np.where(s > 0, s, 1.0), 0.0)


def assemble(grid: Grid, mask: str, d: ScalarField, allow_zero: bool = False) -> DiffusionOperator:
    """Assemble the discrete ``div(d grad .)`` on the active cells of ``mask``.

    ``allow_zero`` admits d = 0 cells (degenerate lab-mode runs).
    """
    if d.tag != mask:
        raise ValueError(f"diffusivity lives on {d.tag!r}, operator on {mask!r}")
    dv = d.values
    bad = dv < 0 if allow_zero else dv <= 0
    if bad.any():
        ix, iy = grid.cell_indices(mask)
        k = int(np.flatnonzero(bad)[0])
        raise ValueError(f"nonpositive diffusivity {dv[k]!r} at cell ({ix[k]}, {iy[k]})")

    m = grid.mask(mask)
    n = int(m.sum())
    index = np.full(m.shape, -1, dtype=np.int64)
    index[m] = np.arange(n)
    dfull = np.zeros(m.shape)
    dfull[m] = dv

    rows, cols, vals = [], [], []
    for left, right in (
        (np.s_[:-1, :], np.s_[1:, :]),
        (np.s_[:, :-1], np.s_[:, 1:]),
    ):
        both = m[left] & m[right]
        p, q = index[left][both], index[right][both]
        g = harmonic_mean(dfull[left][both], dfull[right][both]) / grid.cell_area
        rows += [p, q]
        cols += [q, p]
        vals += [g, g]
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    diag = -np.bincount(rows, weights=vals, minlength=n)
    idx = np.arange(n)
    mat = sp.csr_matrix(
        (np.concatenate([vals, diag]), (np.concatenate([rows, idx]), np.concatenate([cols, idx]))),
        shape=(n, n),
    )
    mat.sort_indices()
    return DiffusionOperator(grid, mask, mat)


def solve_spd(
    A: sp.spmatrix,
    rhs: np.ndarray,
    tol: float = 1e-10,
    maxiter: int | None = None,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients.

    ``rhs`` may hold several right-hand sides as columns; each column stops
    on its own when ``||r|| <= tol * ||b||``.  Returns the solution and the
    number of sweeps taken.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(rhs, dtype=float)
    vector = b.ndim == 1
    if vector:
        b = b[:, None]
    n = A.shape[0]
    maxiter = maxiter if maxiter is not None else 10 * n + 100
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SolverError("matrix is not positive definite (nonpositive diagonal)")
    minv = (1.0 / diag)[:, None]

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).reshape(b.shape)
    r = b - A @ x
    bnorm = np.linalg.norm(b, axis=0)
    target = tol * bnorm
    active = np.linalg.norm(r, axis=0) > target
    z = minv * r
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)
    it = 0
    while active.any():
        if it >= maxiter:
            res = np.max(np.linalg.norm(r, axis=0)[active] / np.where(bnorm[active] > 0, bnorm[active], 1))
            raise SolverError(f"PCG did not converge in {maxiter} sweeps (relative residual {res:.3e})")
        Ap = A @ p
        pAp = np.einsum("ij,ij->j", p, Ap)
        alpha = np.where(active, rz / np.where(pAp > 0, pAp, 1.0), 0.0)
        x += alpha * p
        r -= alpha * Ap
        active = active & (np.linalg.norm(r, axis=0) > target)
        z = minv * r
        rz_new = np.einsum("ij,ij->j", r, z)
        beta = np.where(active, rz_new / np.where(rz > 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new
        it += 1
    return (x[:, 0] if vector else x), it


class DiffusionStep:
    """The implicit step ``w -> (I - dt L + dt diag(sink))^{-1} w``.

    The matrix is fixed at construction; the direct backend factorises it
    once, so repeated steps are exact linear maps up to roundoff.
    """

    def __init__(
        self,
        op: DiffusionOperator,
        dt: float,
        sink: np.ndarray | None = None,
        solver: str = DIRECT,
        tol: float = 1e-10,
    ):
        if dt < 0:
            raise ValueError("dt must be nonnegative")
        self.op = op
        self.dt = float(dt)
        self.solver = solver
        self.tol = tol
        self.iterations = 0
        n = op.size
        shift = np.zeros(n) if sink is None else np.broadcast_to(np.asarray(sink, float), (n,))
        if np.any(shift < 0):
            raise ValueError("sink rate must be nonnegative")
        self.matrix = (
            sp.identity(n, format="csr") - self.dt * op.matrix + sp.diags(self.dt * shift)
        ).tocsr()
        if solver == DIRECT:
            self._lu = splu(self.matrix.tocsc())
        elif solver != PCG:
            raise ValueError(f"unknown linear solver {solver!r}")

    def __call__(self, w: np.ndarray) -> np.ndarray:
        """Solve for one field (1-D) or a stack of fields in columns (2-D)."""
        w = np.asarray(w, dtype=float)
        if self.dt == 0.0:
            return w.copy()
        if self.solver == DIRECT:
            self.iterations = 0
            return self._lu.solve(w)
        x, self.iterations = solve_spd(self.matrix, w, tol=self.tol)
        return x

    def rows(self, stack: np.ndarray) -> np.ndarray:
        """Apply to a stack stored one field per row."""
        if stack.shape[0] == 0:
            return stack.copy()
        return np.ascontiguousarray(self(np.asfortranarray(stack.T)).T)


def step_backward_euler(
    op: DiffusionOperator,
    w: ScalarField,
    dt: float,
    sink_rate: np.ndarray | float | None = None,
    solver: str = DIRECT,
    tol: float = 1e-10,
) -> ScalarField:
    """One backward-Euler step of ``w_t = div(d grad w) - sink * w``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    step = DiffusionStep(op, dt, sink_rate, solver=solver, tol=tol)
    return w.with_values(step(w.values))
