"""Cell-centred meshes in one and two dimensions, and cell averaging.

A 2D grid is the tensor product of two 1D axes. Cell arrays on a 2D grid have
shape ``(nx, ny)`` in C order, so the flattened index is ``i * ny + j``
(row-major, y fastest).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np


class GridError(ValueError):
    """Invalid mesh construction arguments."""


class DiscretizationError(ValueError):
    """A function could not be turned into finite cell averages."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Control volumes ``[x_faces[i], x_faces[i+1])`` on an interval.

    ``dx`` holds the cell widths and ``dx_half`` the N-1 distances between
    neighbouring centres. Non-uniform faces are allowed.
    """

    x_faces: np.ndarray
    x_centers: np.ndarray = field(init=False)
    dx: np.ndarray = field(init=False)
    dx_half: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        faces = _frozen(self.x_faces)
        if faces.ndim != 1 or faces.size < 3:
            raise GridError("a grid needs at least 2 cells")
        if not np.all(np.isfinite(faces)):
            raise GridError("cell faces must be finite")
        widths = np.diff(faces)
        if np.any(widths <= 0):
            raise GridError("cell faces must be strictly increasing")
        centers = 0.5 * (faces[:-1] + faces[1:])
        object.__setattr__(self, "x_faces", faces)
        object.__setattr__(self, "x_centers", _frozen(centers))
        object.__setattr__(self, "dx", _frozen(widths))
        object.__setattr__(self, "dx_half", _frozen(np.diff(centers)))

    @property
    def n_cells(self) -> int:
        return self.x_centers.size

    @property
    def shape(self) -> tuple[int]:
        return (self.n_cells,)

    @property
    def ndim(self) -> int:
        return 1

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.x_faces[0]), float(self.x_faces[-1])

    @property
    def cell_volumes(self) -> np.ndarray:
        return self.dx

    @property
    def measure(self) -> float:
        return float(self.x_faces[-1] - self.x_faces[0])

    @property
    def diameter(self) -> float:
        return self.measure

    @property
    def axes(self) -> tuple["Grid1D"]:
        return (self,)

    def centers(self) -> tuple[np.ndarray]:
        return (self.x_centers,)

    def same_as(self, other: object) -> bool:
        return isinstance(other, Grid1D) and np.array_equal(self.x_faces, other.x_faces)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Tensor-product grid; cell ``(i, j)`` has volume ``x.dx[i] * y.dx[j]``."""

    x: Grid1D
    y: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x.n_cells, self.y.n_cells)

    @property
    def n_cells(self) -> int:
        return self.x.n_cells * self.y.n_cells

    @property
    def ndim(self) -> int:
        return 2

    @property
    def cell_volumes(self) -> np.ndarray:
        return np.multiply.outer(self.x.dx, self.y.dx)

    @property
    def measure(self) -> float:
        return self.x.measure * self.y.measure

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.x.measure, self.y.measure))

    @property
    def axes(self) -> tuple[Grid1D, Grid1D]:
        return (self.x, self.y)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.x.x_centers, self.y.x_centers, indexing="ij"))

    def same_as(self, other: object) -> bool:
        return isinstance(other, Grid2D) and self.x.same_as(other.x) and self.y.same_as(other.y)


Grid = Union[Grid1D, Grid2D]


@dataclass(frozen=True, eq=False)
class Field:
    """Per-cell values of one density on ``grid``, shaped like ``grid.shape``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float)
        if v.size != self.grid.n_cells:
            raise ValueError(f"field has {v.size} values, grid has {self.grid.n_cells} cells")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def mass(self) -> float:
        return float(np.sum(self.values * self.grid.cell_volumes))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(values, self.grid)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(np.full(grid.shape, float(value)), grid)


def build_uniform_grid_1d(x_min: float, x_max: float, n_cells: int) -> Grid1D:
    """Uniform partition of ``[x_min, x_max]`` into ``n_cells`` cells."""
    if not (np.isfinite(x_min) and np.isfinite(x_max)):
        raise GridError("grid bounds must be finite")
    if not x_min < x_max:
        raise GridError("x_min must be smaller than x_max")
    if int(n_cells) != n_cells or n_cells < 2:
        raise GridError("n_cells must be an integer >= 2")
    n = int(n_cells)
    # i*h + x_min keeps faces exact for the usual integer spans
    h = (x_max - x_min) / n
    faces = x_min + h * np.arange(n + 1)
    faces[-1] = x_max
    return Grid1D(faces)


def build_uniform_grid_2d(
    x_min: float, x_max: float, y_min: float, y_max: float, nx: int, ny: int
) -> Grid2D:
    return Grid2D(build_uniform_grid_1d(x_min, x_max, nx), build_uniform_grid_1d(y_min, y_max, ny))


def sample_at_centers(f: Callable, grid: Grid) -> np.ndarray:
    """Point values of ``f`` at the cell centres."""
    vals = np.broadcast_to(np.asarray(f(*grid.centers()), dtype=float), grid.shape)
    if not np.all(np.isfinite(vals)):
        raise DiscretizationError("function is not finite at the cell centres")
    return np.array(vals)


def cell_average(f: Callable, grid: Grid, order: int = 5) -> Field:
    """Cell averages of ``f`` by tensor Gauss-Legendre quadrature per cell.

    ``f`` must accept numpy arrays (one per axis) and broadcast. With
    ``order`` points per axis the rule is exact for polynomials of degree
    ``2 * order - 1``.
    """
    if order < 3:
        raise ValueError("quadrature order must be at least 3")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    # half-weights so that the rule averages over the reference cell
    weights = 0.5 * weights
    if grid.ndim == 1:
        pts = grid.x_centers[:, None] + 0.5 * grid.dx[:, None] * nodes[None, :]
        vals = np.asarray(f(pts), dtype=float)
        vals = np.broadcast_to(vals, pts.shape)
        if not np.all(np.isfinite(vals)):
            raise DiscretizationError("function returned non-finite values")
        return Field(vals @ weights, grid)

    gx, gy = grid.x, grid.y
    px = gx.x_centers[:, None] + 0.5 * gx.dx[:, None] * nodes[None, :]
    py = gy.x_centers[:, None] + 0.5 * gy.dx[:, None] * nodes[None, :]
    # axes: (cell_x, node_x, cell_y, node_y)
    X = px[:, :, None, None]
    Y = py[None, None, :, :]
    vals = np.asarray(f(X, Y), dtype=float)
    vals = np.broadcast_to(vals, (gx.n_cells, order, gy.n_cells, order))
    if not np.all(np.isfinite(vals)):
        raise DiscretizationError("function returned non-finite values")
    avg = np.einsum("aibj,i,j->ab", vals, weights, weights)
    return Field(avg, grid)
