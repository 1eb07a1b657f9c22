"""Nested rectangular habitats on a cell-centred mesh.

The host habitat is the full rectangle; the vector habitat and the seeding
region are rasterised sub-rectangles (cell-centre membership).  Fields carry
values only on the active cells of their mask, stored in C order of the
``(nx, ny)`` cell array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

OMEGA = "omega"
STAR = "star"

Rect = tuple[float, float, float, float]  # (x0, x1, y0, y1)


class GridError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    Lx: float
    Ly: float
    nx: int
    ny: int
    mask_omega: np.ndarray
    mask_star: np.ndarray
    mask_starstar: np.ndarray
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> float:
        return self.Lx / self.nx

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    def mask(self, tag: str) -> np.ndarray:
        if tag == OMEGA:
            return self.mask_omega
        if tag == STAR:
            return self.mask_star
        raise GridError(f"unknown mask tag {tag!r}")

    def n_active(self, tag: str) -> int:
        return int(self.mask(tag).sum())

    def cell_indices(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        """(ix, iy) of the active cells of ``tag``, in storage order."""
        if tag not in self._index:
            ix, iy = np.nonzero(self.mask(tag))
            self._index[tag] = (ix, iy)
        return self._index[tag]

    def cell_centers(self, tag: str) -> tuple[np.ndarray, np.ndarray]:
        ix, iy = self.cell_indices(tag)
        return (ix + 0.5) * self.h, (iy + 0.5) * self.h

    def star_in_omega(self) -> np.ndarray:
        """Positions of the star cells within omega storage order."""
        return np.flatnonzero(self.mask_star.ravel()[self.mask_omega.ravel()])


@dataclass(eq=False)
class ScalarField:
    grid: Grid
    tag: str
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        n = self.grid.n_active(self.tag)
        if self.values.shape != (n,):
            raise GridError(
                f"field on {self.tag} needs {n} values, got shape {self.values.shape}"
            )

    @classmethod
    def constant(cls, grid: Grid, tag: str, c: float) -> ScalarField:
        return cls(grid, tag, np.full(grid.n_active(tag), float(c)))

    @classmethod
    def zeros(cls, grid: Grid, tag: str) -> ScalarField:
        return cls.constant(grid, tag, 0.0)

    def copy(self) -> ScalarField:
        return ScalarField(self.grid, self.tag, self.values.copy())

    def with_values(self, values: np.ndarray) -> ScalarField:
        return ScalarField(self.grid, self.tag, values)

    def to_array(self, fill: float = np.nan) -> np.ndarray:
        """Full ``(nx, ny)`` array; inactive cells get ``fill``."""
        out = np.full((self.grid.nx, self.grid.ny), fill, dtype=float)
        out[self.grid.mask(self.tag)] = self.values
        return out


def _rasterize(centers_x: np.ndarray, centers_y: np.ndarray, rect: Rect) -> np.ndarray:
    x0, x1, y0, y1 = rect
    if not (x0 < x1 and y0 < y1):
        raise GridError(f"degenerate rectangle {rect}")
    # Inclusive bounds with a small fuzz so that centres lying exactly on a
    # rectangle edge (up to rounding) count as inside.
    eps = 1e-9 * max(abs(x1 - x0), abs(y1 - y0))
    inx = (centers_x >= x0 - eps) & (centers_x <= x1 + eps)
    iny = (centers_y >= y0 - eps) & (centers_y <= y1 + eps)
    return inx[:, None] & iny[None, :]


def build_grid(
    Lx: float,
    Ly: float,
    nx: int,
    ny: int,
    star_rect: Rect,
    starstar_rect: Rect,
) -> Grid:
    """Build the mesh and rasterise the vector habitat and the seeding region.

    The vector habitat must keep at least one cell of clearance from the
    outer boundary, so that the two habitat boundaries never meet.
    """
    nx, ny = int(nx), int(ny)
    if nx < 3 or ny < 3:
        raise GridError("need nx >= 3 and ny >= 3")
    if not (Lx > 0 and Ly > 0):
        raise GridError("side lengths must be positive")
    hx, hy = Lx / nx, Ly / ny
    if abs(hx - hy) > 1e-12 * max(hx, hy):
        raise GridError(f"cells must be square (hx={hx}, hy={hy})")

    cx = (np.arange(nx) + 0.5) * hx
    cy = (np.arange(ny) + 0.5) * hx
    mask_omega = np.ones((nx, ny), dtype=bool)
    mask_star = _rasterize(cx, cy, star_rect)
    mask_starstar = _rasterize(cx, cy, starstar_rect)

    if not mask_star.any():
        raise GridError(f"vector habitat {star_rect} contains no cell centre")
    ring = np.zeros_like(mask_star)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    if (mask_star & ring).any():
        raise GridError(
            f"vector habitat {star_rect} touches the outer boundary; "
            "it must stay at least one cell inside"
        )
    _, n_components = ndimage.label(mask_star)
    if n_components != 1:
        raise GridError("vector habitat must be connected")

    x0, x1, y0, y1 = starstar_rect
    if x0 < -1e-12 or y0 < -1e-12 or x1 > Lx + 1e-12 or y1 > Ly + 1e-12:
        raise GridError(f"seeding region {starstar_rect} leaves the domain")
    if not mask_starstar.any():
        raise GridError(f"seeding region {starstar_rect} contains no cell centre")
    if mask_starstar.all():
        raise GridError("seeding region must be strictly smaller than the domain")

    for m in (mask_omega, mask_star, mask_starstar):
        m.setflags(write=False)
    return Grid(float(Lx), float(Ly), nx, ny, mask_omega, mask_star, mask_starstar)


def _check_tag(f: ScalarField, tag: str | None) -> None:
    if tag is not None and f.tag != tag:
        raise GridError(f"field lives on {f.tag!r}, expected {tag!r}")


def integrate(f: ScalarField, mask: str | None = None) -> float:
    """Midpoint-rule integral over the field's own mask."""
    _check_tag(f, mask)
    return f.grid.cell_area * float(np.sum(f.values))


def extend_to_omega(f: ScalarField, fill: float = 0.0) -> ScalarField:
    _check_tag(f, STAR)
    g = f.grid
    out = np.full(g.n_active(OMEGA), float(fill))
    out[g.star_in_omega()] = f.values
    return ScalarField(g, OMEGA, out)


def restrict_to_star(f: ScalarField) -> ScalarField:
    _check_tag(f, OMEGA)
    g = f.grid
    return ScalarField(g, STAR, f.values[g.star_in_omega()].copy())
