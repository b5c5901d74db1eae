"""PCA surface normals, curvature and boundary flags."""
from __future__ import annotations

import numpy as np

from ..errors import NonPositiveRadius
from . import kernels
from .cloud import ColorPointCloud, SurfaceSamples
from .index import SpatialIndex

MIN_NEIGHBORS = 3


def estimate_normals(
    cloud: ColorPointCloud | np.ndarray,
    patch_radius: float,
    viewpoint,
    index: SpatialIndex | None = None,
) -> SurfaceSamples:
    """Per-point PCA over the ``patch_radius`` neighbourhood.

    The normal is the least-variance eigenvector flipped to face ``viewpoint``;
    curvature is ``lambda_min / (l0 + l1 + l2)``. Points with fewer than three
    neighbours (or a degenerate neighbourhood) are omitted.
    """
    if not patch_radius > 0:
        raise NonPositiveRadius(f"patch radius must be positive, got {patch_radius}")
    pts = cloud.points if isinstance(cloud, ColorPointCloud) else np.asarray(cloud, dtype=np.float64)
    viewpoint = np.asarray(viewpoint, dtype=np.float64).reshape(3)
    if len(pts) == 0:
        return _empty_samples()
    if index is None:
        index = SpatialIndex(pts)
    offsets, nbr = index.radius_batch(pts, patch_radius)
    counts = np.diff(offsets)
    # neighbourhoods are centred on their query point to limit cancellation
    cov = kernels.patch_covariances(np.ascontiguousarray(pts, dtype=np.float64), offsets, nbr)
    valid = (counts - 1) >= MIN_NEIGHBORS
    w, v = np.linalg.eigh(cov[valid])
    w = np.clip(w, 0.0, None)
    total = w.sum(axis=1)
    ok = total > 0
    normals = v[ok, :, 0]
    curvature = w[ok, 0] / total[ok]
    src = np.flatnonzero(valid)[ok]
    p = pts[src]
    flip = np.einsum("ij,ij->i", normals, viewpoint - p) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return SurfaceSamples(p.copy(), normals, curvature, np.zeros(len(src), dtype=bool), src)


def _empty_samples() -> SurfaceSamples:
    return SurfaceSamples(
        np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=bool), np.zeros(0, dtype=np.int64)
    )


def boundary_gaps(samples: SurfaceSamples, index: SpatialIndex, radius: float) -> np.ndarray:
    """Largest tangent-plane angular gap among each sample's neighbours."""
    if len(samples) == 0:
        return np.zeros(0)
    offsets, nbr = index.radius_batch(samples.points, radius)
    centers = np.ascontiguousarray(samples.source, dtype=np.int64)
    return kernels.angle_gaps(
        index.points, centers, np.ascontiguousarray(samples.normals), offsets, nbr
    )


def detect_boundary(
    samples: SurfaceSamples,
    index: SpatialIndex,
    angle_gap_threshold: float = np.pi / 2,
    radius: float = 0.01,
) -> SurfaceSamples:
    """Flag samples whose neighbours leave an angular gap wider than the threshold.

    ``index`` must be built over the cloud the samples came from. A sample with
    at most one usable neighbour is a boundary point.
    """
    if not 0 < angle_gap_threshold < 2 * np.pi:
        raise ValueError("angle_gap_threshold must lie in (0, 2*pi)")
    gaps = boundary_gaps(samples, index, radius)
    return samples.with_boundary(gaps > angle_gap_threshold)
