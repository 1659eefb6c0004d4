"""Time grids, dyadic partitions, simplex enumeration and the delta operator."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple

import numpy as np

from .errors import GridError

MAX_LEVEL = 30
_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time points.

    Master grids start at 0 and end at the horizon ``T``.  Partitions of a
    sub-interval ``[a, b]`` (used by the sewing engines) start at ``a``.
    ``level`` is the dyadic depth, or ``None`` for a non-dyadic grid.
    """

    points: np.ndarray
    level: int | None = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise GridError("a grid needs at least two points", "grid.size>=2")
        if not np.all(np.isfinite(pts)):
            raise GridError("grid points must be finite", "grid.finite")
        if np.any(np.diff(pts) <= 0):
            raise GridError("grid points must be strictly increasing", "grid.increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.level is not None:
            h = (pts[-1] - pts[0]) * 2.0 ** (-self.level)
            if pts.size != 2**self.level + 1 or np.max(np.abs(np.diff(pts) - h)) > _REL_TOL * abs(pts[-1]) + 1e-300:
                raise GridError("points are not a dyadic partition of the stated level", "grid.dyadic")

    @property
    def start(self) -> float:
        return float(self.points[0])

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def is_master(self) -> bool:
        return self.points[0] == 0.0

    @property
    def mesh(self) -> float:
        return float(np.max(np.diff(self.points)))

    def __len__(self) -> int:
        return self.points.size

    def __iter__(self):
        return iter(self.points.tolist())

    def index_of(self, t: float) -> int | None:
        """Index of the grid point equal to ``t`` (to 1e-12 relative), else None."""
        tol = _REL_TOL * max(abs(self.T), abs(self.start), 1.0)
        i = int(np.searchsorted(self.points, t - tol))
        if i < self.points.size and abs(self.points[i] - t) <= tol:
            return i
        return None

    def refine(self) -> "TimeGrid":
        """Insert midpoints; dyadic grids stay dyadic."""
        if self.level is not None:
            return dyadic_partition((self.start, self.T), self.level + 1)
        mid = 0.5 * (self.points[:-1] + self.points[1:])
        pts = np.empty(2 * self.points.size - 1)
        pts[0::2] = self.points
        pts[1::2] = mid
        return TimeGrid(pts)


class SimplexTuple(NamedTuple):
    """Ordered grid points together with their grid indices."""

    coords: tuple
    indices: tuple

    @property
    def n(self) -> int:
        return len(self.coords)


def dyadic_partition(interval, level: int) -> TimeGrid:
    """Return the ``2**level + 1`` equally spaced points of ``[a, b]``.

    Points are computed as ``a + k * (b - a) * 2**-level`` so no rounding
    drift accumulates along the grid.
    """
    a, b = float(interval[0]), float(interval[1])
    level = int(level)
    if level < 0:
        raise GridError("level must be non-negative", "grid.level>=0")
    if level > MAX_LEVEL:
        raise GridError(f"level {level} exceeds the memory guard {MAX_LEVEL}", "grid.level<=30")
    if not a < b:
        raise GridError(f"empty interval [{a}, {b}]", "grid.a<b")
    n = 2**level
    k = np.arange(n + 1, dtype=float)
    pts = a + k * ((b - a) / n)
    pts[-1] = b
    return TimeGrid(pts, level=level)


def uniform_grid(T: float, n_cells: int) -> TimeGrid:
    """Uniform grid on ``[0, T]``; dyadic level is set when ``n_cells`` is a power of two."""
    n_cells = int(n_cells)
    if n_cells < 1:
        raise GridError("need at least one cell", "grid.cells>=1")
    if n_cells & (n_cells - 1) == 0:
        return dyadic_partition((0.0, T), n_cells.bit_length() - 1)
    pts = np.arange(n_cells + 1, dtype=float) * (float(T) / n_cells)
    pts[-1] = T
    return TimeGrid(pts)


def simplex_iter(grid: TimeGrid, n: int, allow_boundary: bool = False) -> Iterator[SimplexTuple]:
    """Yield strictly increasing ``n``-tuples of grid points in lexicographic order.

    With ``allow_boundary`` the last coordinate may also equal the one before
    it, which is how diagonal tuples ``tau = t`` are audited.
    """
    if n < 1:
        raise GridError("arity must be at least 1", "simplex.n>=1")
    pts = grid.points
    size = pts.size
    if allow_boundary and n >= 2:
        for head in itertools.combinations(range(size), n - 1):
            last = head[-1]
            for j in range(last, size):
                idx = head + (j,)
                yield SimplexTuple(tuple(float(pts[i]) for i in idx), idx)
        return
    for idx in itertools.combinations(range(size), n):
        yield SimplexTuple(tuple(float(pts[i]) for i in idx), idx)


def simplex_indices(size: int, n: int, allow_boundary: bool = False) -> np.ndarray:
    """All tuples of :func:`simplex_iter` as an ``(count, n)`` integer array."""
    if allow_boundary and n >= 2:
        rows = [head + (j,) for head in itertools.combinations(range(size), n - 1) for j in range(head[-1], size)]
    else:
        rows = list(itertools.combinations(range(size), n))
    if not rows:
        return np.zeros((0, n), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def delta(g: Callable, s: float, u: float, t: float):
    """Return ``g(s, t) - g(u, t) - g(s, u)``, the defect of additivity.

    ``g(a, b)`` is the increment over ``[a, b]``.  Requires ``s < u < t``.
    """
    if not (s < u < t):
        raise GridError(f"delta needs s < u < t, got ({s}, {u}, {t})", "delta.order")
    return g(s, t) - g(u, t) - g(s, u)
