"""Point-cloud geometry: indexing, filtering, clustering, normals and boundaries."""
from .cloud import Aabb3, ColorPointCloud, SurfaceSample, SurfaceSamples, aabb
from .filters import (
    cluster_indices,
    euclidean_cluster,
    mean_knn_distance,
    statistical_outlier_removal,
    voxel_downsample,
)
from .index import SpatialIndex, build_spatial_index
from .kernels import BACKEND
from .normals import detect_boundary, estimate_normals
from .ply import read_ply, write_ply

__all__ = [
    "Aabb3",
    "BACKEND",
    "ColorPointCloud",
    "SpatialIndex",
    "SurfaceSample",
    "SurfaceSamples",
    "aabb",
    "build_spatial_index",
    "cluster_indices",
    "detect_boundary",
    "estimate_normals",
    "euclidean_cluster",
    "mean_knn_distance",
    "read_ply",
    "statistical_outlier_removal",
    "voxel_downsample",
    "write_ply",
]
