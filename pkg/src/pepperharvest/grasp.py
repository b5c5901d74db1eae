"""Grasp candidates from surface normals, ranked by a weighted utility.

Each candidate gets three scores in [0, 1]:

* S1, flatness: ``1 - minmax(curvature)``
* S2, clearance: ``minmax(distance to the nearest boundary sample)``
* S3, levelness: ``1 - elevation(approach) / (pi/2)``

and utility ``U = W1*S1 + W2*S2 + W3*S3`` with the weights summing to one.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detect import PepperTarget
from .errors import AttemptsExhausted, ConfigError, NoCandidates
from .geometry import SpatialIndex, SurfaceSamples, detect_boundary, estimate_normals

MAX_ATTEMPTS = 5


@dataclass(frozen=True)
class GraspWeights:
    curvature: float = 0.2
    boundary: float = 0.5
    rotation: float = 0.3

    def __post_init__(self):
        w = self.as_array()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigError(f"grasp weights must be non-negative, got {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"grasp weights must sum to 1, got {w.sum()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.curvature, self.boundary, self.rotation], dtype=np.float64)


@dataclass(frozen=True)
class GraspCandidate:
    position: np.ndarray
    approach: np.ndarray
    curvature: float
    sample_index: int
    s1: float = 0.0
    s2: float = 0.0
    s3: float = 0.0
    utility: float = 0.0

    @property
    def scores(self) -> tuple[float, float, float]:
        return (self.s1, self.s2, self.s3)

    def to_json(self) -> dict:
        return {
            "position": [float(v) for v in self.position],
            "approach": [float(v) for v in self.approach],
            "S1": self.s1,
            "S2": self.s2,
            "S3": self.s3,
            "U": self.utility,
        }


def utility(scores, weights: GraspWeights) -> np.ndarray:
    """U for an (n, 3) score array (or a single triple)."""
    s = np.asarray(scores, dtype=np.float64)
    w = weights.as_array()
    return s[..., 0] * w[0] + s[..., 1] * w[1] + s[..., 2] * w[2]


def minmax(x) -> np.ndarray:
    """Scale to [0, 1]; a constant column maps to 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    lo, hi = x.min(), x.max()
    if not hi > lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def elevation(approach) -> np.ndarray:
    """Angle between approach vectors and the horizontal plane, in [0, pi/2]."""
    a = np.asarray(approach, dtype=np.float64).reshape(-1, 3)
    return np.arcsin(np.clip(np.abs(a[:, 2]) / np.linalg.norm(a, axis=1), 0.0, 1.0))


def score_columns(curvature, boundary_distance, approach) -> np.ndarray:
    s1 = 1.0 - minmax(curvature)
    s2 = minmax(boundary_distance)
    s3 = 1.0 - elevation(approach) / (math.pi / 2)
    return np.clip(np.stack([s1, s2, s3], axis=1), 0.0, 1.0)


def candidate_grasps(
    target: PepperTarget,
    patch_radius: float = 0.02,
    camera=(0.0, 0.0, 0.0),
    angle_threshold: float = math.pi / 4,
    boundary_radius: float = 0.01,
    boundary_gap: float = math.pi / 2,
) -> tuple[list[GraspCandidate], SurfaceSamples]:
    """Unscored candidates (approach = -normal) and the boundary-tagged samples.

    Samples whose normal leaves the horizontal plane by more than
    ``angle_threshold`` are discarded.
    """
    cloud = target.cloud if isinstance(target, PepperTarget) else target
    if len(cloud) < 3:
        raise NoCandidates(f"need at least 3 points, got {len(cloud)}")
    index = SpatialIndex(cloud.points)
    samples = estimate_normals(cloud, patch_radius, camera, index=index)
    if len(samples) == 0:
        raise NoCandidates("no valid surface normals")
    samples = detect_boundary(samples, index, boundary_gap, boundary_radius)
    keep = np.nonzero(elevation(samples.normals) <= angle_threshold + 1e-12)[0]
    if len(keep) == 0:
        raise NoCandidates("every normal exceeds the angle threshold")
    return [
        GraspCandidate(samples.points[i].copy(), -samples.normals[i], float(samples.curvature[i]), int(i))
        for i in keep
    ], samples


def boundary_distance(points: np.ndarray, samples: SurfaceSamples) -> np.ndarray:
    b = samples.points[samples.is_boundary]
    if len(b) == 0:
        return np.zeros(len(points))
    _, dist = SpatialIndex(b).knn_batch(np.asarray(points, dtype=np.float64).reshape(-1, 3), 1)
    return dist[:, 0]


def score_grasps(
    candidates: list[GraspCandidate], samples: SurfaceSamples, weights: GraspWeights = GraspWeights()
) -> list[GraspCandidate]:
    """Scored candidates by descending U; ties go to the one nearest the sample centroid."""
    if not candidates:
        return []
    pos = np.stack([c.position for c in candidates])
    app = np.stack([c.approach for c in candidates])
    curv = np.array([c.curvature for c in candidates])
    s = score_columns(curv, boundary_distance(pos, samples), app)
    u = utility(s, weights)
    centre = samples.points.mean(axis=0)
    dc = np.linalg.norm(pos - centre, axis=1)
    order = np.lexsort((pos[:, 2], pos[:, 1], pos[:, 0], dc, -u))
    return [
        GraspCandidate(
            candidates[i].position,
            candidates[i].approach,
            candidates[i].curvature,
            candidates[i].sample_index,
            float(s[i, 0]),
            float(s[i, 1]),
            float(s[i, 2]),
            float(u[i]),
        )
        for i in order
    ]


def rank_grasps(target, camera, patch_radius=0.02, weights=GraspWeights(), angle_threshold=math.pi / 4, **kw):
    cands, samples = candidate_grasps(target, patch_radius, camera, angle_threshold, **kw)
    return score_grasps(cands, samples, weights)


def next_grasp(ranked: list[GraspCandidate], attempt_index: int, max_attempts: int = MAX_ATTEMPTS) -> GraspCandidate:
    if attempt_index < 0:
        raise ValueError("attempt_index must be non-negative")
    if attempt_index >= max_attempts:
        raise AttemptsExhausted(f"attempt {attempt_index} exceeds the cap of {max_attempts}")
    if attempt_index >= len(ranked):
        raise AttemptsExhausted(f"only {len(ranked)} ranked grasps")
    return ranked[attempt_index]


def write_grasps_jsonl(path, ranked: list[GraspCandidate]) -> None:
    with Path(path).open("w") as fh:
        for g in ranked:
            fh.write(json.dumps(g.to_json(), sort_keys=True) + "\n")
