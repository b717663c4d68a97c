"""Cartesian grids with a homogeneous Dirichlet boundary layer.

Cells are centred on the lattice points ``lower + i * h`` with
``h = (upper - lower) / (n - 1)``, so the outermost layer of cells sits
on the boundary of the domain and carries the value zero.  Each cell is
the part of the dual box around its centre lying inside the domain,
which gives boundary cells half (or, at corners, quarter) volume and
makes the cell volumes sum to the measure of the domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class Grid:
    shape: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        lower = tuple(float(a) for a in np.atleast_1d(self.lower))
        upper = tuple(float(b) for b in np.atleast_1d(self.upper))
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(shape) not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if not (len(lower) == len(upper) == len(shape)):
            raise ValueError("shape, lower and upper must have equal length")
        if any(n < 3 for n in shape):
            raise ValueError("need at least 3 cells per axis (one interior cell)")
        if any(b <= a for a, b in zip(lower, upper)):
            raise ValueError("domain extents must satisfy lower < upper")

    @classmethod
    def unit(cls, n, dim=1):
        """Uniform grid on the unit interval or unit square."""
        return cls((n,) * dim, (0.0,) * dim, (1.0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.shape))

    @property
    def measure(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.lower, self.upper)]))

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.shape))

    @cached_property
    def coords(self) -> np.ndarray:
        """Cell centres, shape ``(n_cells, dim)`` in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([c.ravel() for c in mesh], axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Cell volumes (midpoint quadrature weights)."""
        per_axis = []
        for n, h in zip(self.shape, self.spacing):
            w = np.full(n, h)
            w[[0, -1]] = h / 2
            per_axis.append(w)
        w = per_axis[0]
        for extra in per_axis[1:]:
            w = np.multiply.outer(w, extra)
        return np.ascontiguousarray(w.ravel())

    @cached_property
    def boundary(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        return mask.ravel()

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    def refine(self, factor=2) -> "Grid":
        """Grid with the spacing divided by ``factor`` on every axis."""
        return Grid(tuple((n - 1) * factor + 1 for n in self.shape), self.lower, self.upper)

    def check(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_cells,):
            raise ValueError(f"expected {self.n_cells} cell values, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("grid function has non-finite values")
        return u

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x)`` (x of shape ``(n_cells, dim)``) at the cell centres."""
        return np.broadcast_to(np.asarray(func(self.coords), dtype=float), (self.n_cells,)).copy()

    # --- discrete gradient ---------------------------------------------------

    @cached_property
    def elements(self) -> "Elements":
        return _build_elements(self)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True, eq=False)
class Elements:
    """Gradient elements of a grid.

    In 1D these are the faces between neighbouring cells.  In 2D every
    square of four neighbouring centres is split into two right
    triangles; on the lower triangle the gradient is the pair of forward
    differences from its right-angle vertex, on the upper one the pair of
    backward differences.  ``diff[k]`` maps cell values to the k-th
    gradient component on every element, ``average`` maps cell values to
    the vertex mean on every element.
    """

    diff: tuple[sp.csr_matrix, ...]
    average: sp.csr_matrix
    weights: np.ndarray

    @property
    def n_elements(self) -> int:
        return self.weights.size


def _build_elements(grid: Grid) -> Elements:
    if grid.dim == 1:
        n = grid.shape[0]
        (h,) = grid.spacing
        rows = np.arange(n - 1)
        ones = np.ones(n - 1)
        d = sp.csr_matrix(
            (np.concatenate([-ones, ones]) / h, (np.concatenate([rows, rows]), np.concatenate([rows, rows + 1]))),
            shape=(n - 1, n),
        )
        avg = sp.csr_matrix(
            (np.full(2 * (n - 1), 0.5), (np.concatenate([rows, rows]), np.concatenate([rows, rows + 1]))),
            shape=(n - 1, n),
        )
        return Elements((d,), avg, np.full(n - 1, h))

    nx, ny = grid.shape
    hx, hy = grid.spacing
    idx = np.arange(grid.n_cells).reshape(nx, ny)
    c00 = idx[:-1, :-1].ravel()
    c10 = idx[1:, :-1].ravel()
    c01 = idx[:-1, 1:].ravel()
    c11 = idx[1:, 1:].ravel()
    ns = c00.size
    lo = np.arange(ns)
    up = lo + ns
    ones = np.ones(ns)
    shape = (2 * ns, grid.n_cells)

    def mat(rows, cols, vals):
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape)

    dx = mat([lo, lo, up, up], [c00, c10, c01, c11], [-ones / hx, ones / hx, -ones / hx, ones / hx])
    dy = mat([lo, lo, up, up], [c00, c01, c10, c11], [-ones / hy, ones / hy, -ones / hy, ones / hy])
    third = ones / 3
    avg = mat([lo, lo, lo, up, up, up], [c00, c10, c01, c11, c10, c01], [third] * 6)
    return Elements((dx, dy), avg, np.full(2 * ns, hx * hy / 2))
