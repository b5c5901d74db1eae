"""Point cloud containers and axis-aligned boxes."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..errors import EmptyCloud


@dataclass(frozen=True)
class ColorPointCloud:
    """Points (world frame, meters) with parallel RGB colors.

    ``pixels`` optionally records the (row, col) image coordinate each point
    was projected from.
    """

    points: np.ndarray
    colors: np.ndarray
    pixels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        cols = np.asarray(self.colors)
        if cols.size == 0:
            cols = np.zeros((len(pts), 3), dtype=np.uint8)
        cols = np.ascontiguousarray(cols.reshape(-1, 3))
        if cols.dtype != np.uint8:
            if np.any(cols < 0) or np.any(cols > 255):
                raise ValueError("color channels must lie in 0..255")
            cols = cols.astype(np.uint8)
        if len(cols) != len(pts):
            raise ValueError(f"{len(pts)} points but {len(cols)} colors")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", cols)
        if self.pixels is not None:
            pix = np.ascontiguousarray(np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2))
            if len(pix) != len(pts):
                raise ValueError(f"{len(pts)} points but {len(pix)} pixel origins")
            object.__setattr__(self, "pixels", pix)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls, with_pixels: bool = False) -> "ColorPointCloud":
        pix = np.zeros((0, 2), dtype=np.int64) if with_pixels else None
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8), pix)

    def subset(self, idx) -> "ColorPointCloud":
        """Points selected by an index array or boolean mask, order preserved."""
        pix = None if self.pixels is None else self.pixels[idx]
        return ColorPointCloud(self.points[idx], self.colors[idx], pix)

    def centroid(self) -> np.ndarray:
        if len(self) == 0:
            raise EmptyCloud("centroid of an empty cloud")
        return self.points.mean(axis=0)

    def transformed(self, pose: np.ndarray) -> "ColorPointCloud":
        """Apply a 4x4 rigid transform to the points."""
        pose = np.asarray(pose, dtype=np.float64)
        pts = self.points @ pose[:3, :3].T + pose[:3, 3]
        return ColorPointCloud(pts, self.colors, self.pixels)


@dataclass(frozen=True)
class Aabb3:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def size(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside the closed box."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.all((p >= self.min) & (p <= self.max), axis=1)


def aabb(cloud: ColorPointCloud | np.ndarray) -> Aabb3:
    pts = cloud.points if isinstance(cloud, ColorPointCloud) else np.asarray(cloud, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyCloud("bounding box of an empty cloud")
    return Aabb3(pts.min(axis=0), pts.max(axis=0))


class SurfaceSample(NamedTuple):
    point: np.ndarray
    normal: np.ndarray
    curvature: float
    is_boundary: bool


@dataclass
class SurfaceSamples:
    """Column-wise storage of per-point surface estimates.

    ``source`` holds the index of each sample's point in the cloud it was
    estimated from; points without a valid estimate are absent.
    """

    points: np.ndarray
    normals: np.ndarray
    curvature: np.ndarray
    is_boundary: np.ndarray
    source: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    def __getitem__(self, i: int) -> SurfaceSample:
        return SurfaceSample(
            self.points[i], self.normals[i], float(self.curvature[i]), bool(self.is_boundary[i])
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def with_boundary(self, flags: np.ndarray) -> "SurfaceSamples":
        return SurfaceSamples(self.points, self.normals, self.curvature, np.asarray(flags, bool), self.source)
