"""Finite grids over which the solvers enumerate states and inputs.

A grid is an ordered, duplicate-free collection of points in R^n with a
stable integer id per point.  Three layouts cover everything the solvers
need:

* :class:`AxisGrid`    - sorted 1-D values (energy levels, aggregates)
* :class:`PointGrid`   - an explicit ordered list of n-dimensional points
* :class:`ProductGrid` - cartesian product of other grids, ids mixed
  row-major over the parts

Lookup semantics shared by all layouts:

* ``locate_exact(x, atol)``  - id of the point within ``atol`` per
  coordinate, else -1
* ``locate_nearest(x)``      - id of the closest point.  Ties resolve to
  the higher neighbour on an AxisGrid and to the lower id on a PointGrid;
  both are deterministic.

Grids are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["AxisGrid", "PointGrid", "ProductGrid", "InputGrid", "as_state_grid"]


def _as_matrix(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("a grid needs a nonempty list of points")
    return pts


class AxisGrid:
    """Strictly increasing 1-D grid; values are sorted and de-duplicated."""

    def __init__(self, values):
        vals = np.unique(np.asarray(values, dtype=float).ravel())
        if vals.size == 0:
            raise ValueError("empty axis")
        if not np.all(np.isfinite(vals)):
            raise ValueError("axis values must be finite")
        self.values = vals
        self.values.setflags(write=False)
        self._points: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def dim(self) -> int:
        return 1

    @property
    def points(self) -> np.ndarray:
        if self._points is None:
            self._points = self.values[:, None]
            self._points.setflags(write=False)
        return self._points

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.values[:1], self.values[-1:]

    def project(self, values) -> np.ndarray:
        """Ids of the nearest grid values, elementwise; ties go up."""
        arr = np.asarray(values, dtype=float)
        v = self.values
        if v.size == 1:
            return np.zeros(arr.shape, dtype=np.int64)
        idx = np.clip(np.searchsorted(v, arr), 1, v.size - 1)
        left = v[idx - 1]
        right = v[idx]
        idx = idx - ((arr - left) < (right - arr))
        return idx.astype(np.int64)

    def project_bounded(self, values, atol: float) -> np.ndarray:
        """Like :meth:`project` but -1 for values outside the axis range."""
        arr = np.asarray(values, dtype=float)
        ids = self.project(arr)
        bad = ~np.isfinite(arr) | (arr < self.values[0] - atol) | (arr > self.values[-1] + atol)
        return np.where(bad, -1, ids)

    def locate_nearest(self, x) -> int:
        val = float(np.asarray(x, dtype=float).ravel()[0])
        return int(self.project(np.array([val]))[0])

    def locate_exact(self, x, atol: float = 1e-9) -> int:
        arr = np.asarray(x, dtype=float).ravel()
        if arr.size != 1 or not np.isfinite(arr[0]):
            return -1
        i = self.locate_nearest(arr[0])
        return i if abs(self.values[i] - arr[0]) <= atol else -1


class PointGrid:
    """Explicit ordered list of points; user order defines the ids."""

    def __init__(self, points):
        self._points = _as_matrix(points)
        keys = [tuple(p) for p in self._points]
        if len(set(keys)) != len(keys):
            raise ValueError("grid points must be unique")
        self._index = {k: i for i, k in enumerate(keys)}
        self._points.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self._points.shape[0])

    @property
    def dim(self) -> int:
        return int(self._points.shape[1])

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self._points.min(axis=0), self._points.max(axis=0)

    def locate_nearest(self, x) -> int:
        arr = np.asarray(x, dtype=float).ravel()
        d2 = np.square(self._points - arr[None, :]).sum(axis=1)
        return int(np.argmin(d2))

    def locate_exact(self, x, atol: float = 1e-9) -> int:
        arr = np.asarray(x, dtype=float).ravel()
        if arr.size != self.dim or not np.all(np.isfinite(arr)):
            return -1
        hit = self._index.get(tuple(arr))
        if hit is not None:
            return hit
        i = self.locate_nearest(arr)
        return i if np.all(np.abs(self._points[i] - arr) <= atol) else -1


class ProductGrid:
    """Cartesian product of grids; id = row-major mix of part ids."""

    def __init__(self, parts: Sequence):
        if not parts:
            raise ValueError("product grid needs at least one part")
        self.parts = [as_state_grid(p) for p in parts]
        self.part_sizes = [p.size for p in self.parts]
        self._offsets = np.cumsum([0] + [p.dim for p in self.parts])
        strides = [1] * len(self.parts)
        for k in range(len(self.parts) - 2, -1, -1):
            strides[k] = strides[k + 1] * self.part_sizes[k + 1]
        self.strides = strides
        self._points: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(np.prod(self.part_sizes))

    @property
    def dim(self) -> int:
        return int(self._offsets[-1])

    @property
    def points(self) -> np.ndarray:
        if self._points is None:
            blocks = []
            reps_before = 1
            reps_after = self.size
            for p in self.parts:
                reps_after //= p.size
                block = np.repeat(p.points, reps_after, axis=0)
                block = np.tile(block, (reps_before, 1))
                blocks.append(block)
                reps_before *= p.size
            self._points = np.hstack(blocks)
            self._points.setflags(write=False)
        return self._points

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = zip(*(p.bounds for p in self.parts))
        return np.concatenate(los), np.concatenate(his)

    def _split(self, x) -> list[np.ndarray]:
        arr = np.asarray(x, dtype=float).ravel()
        return [arr[self._offsets[k] : self._offsets[k + 1]] for k in range(len(self.parts))]

    def compose(self, part_ids: Sequence[int]) -> int:
        total = 0
        for pid, stride in zip(part_ids, self.strides):
            if pid < 0:
                return -1
            total += pid * stride
        return total

    def locate_nearest(self, x) -> int:
        # squared distance separates over parts, so part-wise nearest is global nearest
        return self.compose([p.locate_nearest(s) for p, s in zip(self.parts, self._split(x))])

    def locate_exact(self, x, atol: float = 1e-9) -> int:
        return self.compose([p.locate_exact(s, atol) for p, s in zip(self.parts, self._split(x))])


class InputGrid:
    """Ordered, duplicate-free input points; order fixes tie-breaking."""

    def __init__(self, points):
        self._points = _as_matrix(points)
        keys = [tuple(p) for p in self._points]
        if len(set(keys)) != len(keys):
            raise ValueError("input points must be unique")
        self._points.setflags(write=False)

    @property
    def size(self) -> int:
        return int(self._points.shape[0])

    @property
    def dim(self) -> int:
        return int(self._points.shape[1])

    @property
    def points(self) -> np.ndarray:
        return self._points


def as_state_grid(obj):
    """Coerce arrays / value lists to a grid; pass grids through."""
    if isinstance(obj, (AxisGrid, PointGrid, ProductGrid)):
        return obj
    return PointGrid(obj)


def _nearest_ids(grid, pts: np.ndarray) -> np.ndarray:
    if isinstance(grid, AxisGrid):
        return grid.project(pts[:, 0])
    if isinstance(grid, PointGrid):
        d2 = np.square(pts[:, None, :] - grid.points[None, :, :]).sum(axis=2)
        return np.argmin(d2, axis=1).astype(np.int64)
    ids = np.zeros(pts.shape[0], dtype=np.int64)
    offset = 0
    for part, size in zip(grid.parts, grid.part_sizes):
        ids = ids * size + _nearest_ids(part, pts[:, offset : offset + part.dim])
        offset += part.dim
    return ids


def locate_points(grid, pts, atol: float = 1e-9, strict: bool = False) -> np.ndarray:
    """Vectorised form of the scalar locate semantics; -1 per bad row.

    Matches ``locate_exact`` (strict) or the bounds-checked nearest
    projection (default) row for row, including tie-breaking.
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    finite = np.isfinite(pts).all(axis=1)
    ids = _nearest_ids(grid, np.where(finite[:, None], pts, 0.0))
    if strict:
        hit = np.abs(grid.points[ids] - pts) <= atol
        good = finite & hit.all(axis=1)
    else:
        lo, hi = grid.bounds
        good = finite & (pts >= lo - atol).all(axis=1) & (pts <= hi + atol).all(axis=1)
    return np.where(good, ids, -1)
