"""Downsampling, outlier removal and Euclidean clustering."""
from __future__ import annotations

import numpy as np

from ..errors import NonPositiveRadius, TooFewPoints
from .cloud import ColorPointCloud
from .index import SpatialIndex


def voxel_downsample(cloud: ColorPointCloud, radius: float, return_inverse: bool = False):
    """One point per occupied cube of side ``radius`` at the members' centroid.

    Cells are ``floor(coord / radius)`` per axis. Colors are averaged and
    rounded half-up; the pixel origin of a cell is that of its first member.
    Output is ordered by cell (z, y, x lexicographic). With ``return_inverse``
    also returns each input point's output index.
    """
    if not radius > 0:
        raise NonPositiveRadius(f"downsample radius must be positive, got {radius}")
    n = len(cloud)
    if n == 0:
        out = ColorPointCloud.empty(with_pixels=cloud.pixels is not None)
        return (out, np.zeros(0, dtype=np.int64)) if return_inverse else out
    cells = np.floor(cloud.points / radius).astype(np.int64)
    _, first, inverse, counts = np.unique(
        cells[:, ::-1], axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.reshape(-1)
    m = len(counts)
    pts = np.zeros((m, 3))
    np.add.at(pts, inverse, cloud.points)
    pts /= counts[:, None]
    col = np.zeros((m, 3))
    np.add.at(col, inverse, cloud.colors.astype(np.float64))
    col = np.floor(col / counts[:, None] + 0.5).clip(0, 255).astype(np.uint8)
    pix = None
    if cloud.pixels is not None:
        # np.unique's return_index gives the first occurrence of each cell
        pix = cloud.pixels[first]
    out = ColorPointCloud(pts, col, pix)
    return (out, inverse.astype(np.int64)) if return_inverse else out


def mean_knn_distance(cloud: ColorPointCloud, k: int) -> np.ndarray:
    """Mean distance from each point to its ``k`` nearest other points."""
    index = SpatialIndex(cloud.points)
    _, dist = index.knn_batch(cloud.points, k, exclude=np.arange(len(cloud), dtype=np.int64))
    return dist.mean(axis=1)


def statistical_outlier_removal(cloud: ColorPointCloud, k: int = 16, stddev_mult: float = 1.0):
    """Drop points whose mean k-NN distance exceeds mean + mult * std of that statistic."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(cloud) <= k:
        raise TooFewPoints(f"need more than k={k} points, got {len(cloud)}")
    stat = mean_knn_distance(cloud, k)
    limit = stat.mean() + stddev_mult * stat.std()
    return cloud.subset(stat <= limit)


def euclidean_cluster(
    cloud: ColorPointCloud, tolerance: float, min_size: int = 1, max_size: int | None = None
) -> list[ColorPointCloud]:
    """Connected components of the ``tolerance`` graph, largest first.

    Components outside ``[min_size, max_size]`` are dropped. Equal-size
    clusters keep the order of their lowest point index.
    """
    return [cloud.subset(idx) for idx in cluster_indices(cloud.points, tolerance, min_size, max_size)]


def cluster_indices(points: np.ndarray, tolerance: float, min_size: int = 1, max_size: int | None = None):
    if not tolerance > 0:
        raise NonPositiveRadius(f"cluster tolerance must be positive, got {tolerance}")
    if max_size is None:
        max_size = len(points)
    if not 1 <= min_size <= max_size:
        raise ValueError(f"invalid cluster size bounds [{min_size}, {max_size}]")
    if len(points) == 0:
        return []
    labels = SpatialIndex(points).components(tolerance)
    sizes = np.bincount(labels)
    order = np.argsort(labels, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    keep = [c for c in np.argsort(-sizes, kind="stable") if min_size <= sizes[c] <= max_size]
    return [order[bounds[c] : bounds[c + 1]] for c in keep]
