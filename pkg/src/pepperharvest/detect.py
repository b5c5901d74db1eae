"""Sweet-pepper detection: color segmentation, clustering and target selection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import RgbdFrame, facing_row, project_to_cloud
from .color import GaussianColorModel, segment_image
from .errors import NoTargets
from .geometry import (
    Aabb3,
    ColorPointCloud,
    aabb,
    cluster_indices,
    statistical_outlier_removal,
    voxel_downsample,
)


@dataclass(frozen=True)
class DetectParams:
    threshold: float = -4.0
    downsample_radius: float = 0.002
    cluster_tolerance: float = 0.01
    cluster_min: int = 1000
    cluster_max: int = 250_000
    sor_k: int = 16
    sor_stddev_mult: float = 1.0


@dataclass(frozen=True)
class ImageBox:
    """Image-space box: centre (c_x col, c_y row) and size in pixels."""

    cx: float
    cy: float
    width: float
    height: float

    @classmethod
    def from_pixels(cls, pixels: np.ndarray) -> "ImageBox":
        rows, cols = pixels[:, 0], pixels[:, 1]
        r0, r1, c0, c1 = rows.min(), rows.max(), cols.min(), cols.max()
        return cls((c0 + c1) / 2.0, (r0 + r1) / 2.0, float(c1 - c0 + 1), float(r1 - r0 + 1))


@dataclass
class PepperTarget:
    cloud: ColorPointCloud
    centroid: np.ndarray
    bb3: Aabb3
    bb2: ImageBox
    cluster_size: int


def detect_peppers(
    frame: RgbdFrame, model: GaussianColorModel, params: DetectParams = DetectParams()
) -> list[PepperTarget]:
    """Segment, project, downsample, cluster and denoise red-pepper points.

    Targets are ordered by descending cluster size (before outlier removal).
    """
    mask, _ = segment_image(model, frame.rgb, params.threshold)
    cloud = project_to_cloud(frame, mask)
    if len(cloud) == 0:
        return []
    cloud = voxel_downsample(cloud, params.downsample_radius)
    targets = []
    for idx in cluster_indices(cloud.points, params.cluster_tolerance, params.cluster_min, params.cluster_max):
        members = cloud.subset(idx)
        if len(members) > params.sor_k:
            members = statistical_outlier_removal(members, params.sor_k, params.sor_stddev_mult)
        targets.append(
            PepperTarget(
                cloud=members,
                centroid=members.centroid(),
                bb3=aabb(members),
                bb2=ImageBox.from_pixels(members.pixels),
                cluster_size=len(idx),
            )
        )
    return targets


def select_target(targets: list[PepperTarget], reference, tie_band: float = 0.05) -> PepperTarget:
    """Largest cluster; sizes within ``tie_band`` of the largest are ranked by distance to ``reference``."""
    if not targets:
        raise NoTargets("no pepper targets to choose from")
    ref = np.asarray(reference, dtype=np.float64).reshape(3)
    largest = max(t.cluster_size for t in targets)
    band = [t for t in targets if t.cluster_size >= (1.0 - tie_band) * largest]

    def key(t: PepperTarget):
        return (float(np.linalg.norm(t.centroid - ref)), -t.cluster_size, tuple(t.centroid))

    return min(band, key=key)


def close_range_viewpoint(target: PepperTarget | np.ndarray, standoff: float = 0.4, vertical_offset: float = 0.1):
    """Camera pose ``standoff`` in front of the target along -y, raised by ``vertical_offset``.

    The camera looks along +y, so its optical axis passes through the centroid
    raised by the offset and the pepper appears shifted down in the image.
    """
    if not standoff > 0:
        raise ValueError("standoff must be positive")
    c = target.centroid if isinstance(target, PepperTarget) else np.asarray(target, dtype=np.float64)
    return facing_row(c + np.array([0.0, -standoff, vertical_offset]))
