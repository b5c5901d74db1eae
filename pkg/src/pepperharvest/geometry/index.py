"""Uniform-grid spatial hash for exact radius and k-nearest queries."""
from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyCloud, NonPositiveRadius
from . import kernels
from .cloud import ColorPointCloud

# cells per axis are capped so linear cell keys fit comfortably in int64
_MAX_CELLS_PER_AXIS = 1 << 20
# radius grids use cells a hair wider than the radius so a 3x3x3 block always suffices
_RADIUS_CELL_PAD = 1.0 + 1e-6


@dataclass(frozen=True)
class Grid:
    origin: np.ndarray
    cell: float
    dims: np.ndarray
    order: np.ndarray
    keys: np.ndarray
    starts: np.ndarray

    def args(self):
        return self.origin, self.cell, self.dims, self.order, self.keys, self.starts


def build_grid(points: np.ndarray, cell: float) -> Grid:
    origin = points.min(axis=0)
    extent = float((points.max(axis=0) - origin).max())
    cell = max(float(cell), extent / _MAX_CELLS_PER_AXIS, 1e-12)
    coords = np.floor((points - origin) / cell).astype(np.int64)
    dims = coords.max(axis=0) + 1
    keys = coords[:, 0] + dims[0] * (coords[:, 1] + dims[1] * coords[:, 2])
    order = np.argsort(keys, kind="stable").astype(np.int64)
    uniq, first = np.unique(keys[order], return_index=True)
    starts = np.append(first, len(order)).astype(np.int64)
    return Grid(origin, cell, dims.astype(np.int64), order, uniq.astype(np.int64), starts)


class SpatialIndex:
    """Read-only neighbour index over a fixed point set.

    Grids are built lazily per query radius and cached; results are exact
    (identical to brute force) and deterministic: radius results ascend by
    point index, k-nearest results by (distance, index).
    """

    def __init__(self, points: np.ndarray):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty cloud")
        self.points = pts
        self._grids: dict[float, Grid] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.points)

    def _grid(self, cell: float) -> Grid:
        g = self._grids.get(cell)
        if g is None:
            g = build_grid(self.points, cell)
            with self._lock:
                self._grids.setdefault(cell, g)
        return g

    def _knn_cell(self, k: int) -> float:
        n = len(self.points)
        extent = float((self.points.max(axis=0) - self.points.min(axis=0)).max())
        if extent == 0.0:
            return 1.0
        # sized for roughly k points per cell on a 2-D surface
        return extent * min(1.0, np.sqrt(max(k, 1) / n))

    def radius_batch(self, queries: np.ndarray, r: float):
        """CSR neighbour lists ``(offsets, indices)`` for many queries."""
        if not r > 0:
            raise NonPositiveRadius(f"radius must be positive, got {r}")
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        grid = self._grid(r * _RADIUS_CELL_PAD)
        return kernels.radius_neighbors(self.points, *grid.args(), q, float(r))

    def radius(self, query, r: float) -> np.ndarray:
        _, idx = self.radius_batch(np.asarray(query, dtype=np.float64).reshape(1, 3), r)
        return idx

    def knn_batch(self, queries: np.ndarray, k: int, exclude: np.ndarray | None = None):
        """``(indices, distances)`` of shape (m, k); rows padded with -1/inf."""
        if k < 1:
            raise ValueError("k must be >= 1")
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        if exclude is None:
            exclude = np.full(len(q), -1, dtype=np.int64)
        exclude = np.ascontiguousarray(exclude, dtype=np.int64)
        grid = self._grid(self._knn_cell(k))
        return kernels.knn(self.points, *grid.args(), q, int(k), exclude)

    def knn(self, query, k: int):
        idx, d = self.knn_batch(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
        keep = idx[0] >= 0
        return idx[0][keep], d[0][keep]

    def components(self, tol: float) -> np.ndarray:
        """Connected-component labels of the ``tol``-neighbourhood graph."""
        if not tol > 0:
            raise NonPositiveRadius(f"tolerance must be positive, got {tol}")
        grid = self._grid(tol * _RADIUS_CELL_PAD)
        return kernels.euclidean_components(self.points, *grid.args(), float(tol))


def build_spatial_index(cloud: ColorPointCloud | np.ndarray) -> SpatialIndex:
    pts = cloud.points if isinstance(cloud, ColorPointCloud) else cloud
    return SpatialIndex(pts)
