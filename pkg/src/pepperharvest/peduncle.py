"""Peduncle localisation: image ROI, pixel scorers, 3D post-filter and cutting pose."""
from __future__ import annotations

import abc
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import RgbdFrame, project_to_cloud
from .color import GaussianColorModel, rgb_to_rotated_hsv
from .detect import ImageBox
from .errors import DegenerateRoi, NoNegatives, NoPeduncle, NoPositives, ScorerFailure
from .geometry import Aabb3, ColorPointCloud, cluster_indices, voxel_downsample
from .imageio import read_score_map

MIN_PEDUNCLE_POINTS = 50

# tool frame columns: x = world y, y = world z (blade plane normal), z = world x (approach)
CUT_ORIENTATION = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
CUT_ORIENTATION.setflags(write=False)


@dataclass(frozen=True)
class Roi2:
    """Half-open pixel window ``rows [row0, row1)``, ``cols [col0, col1)``."""

    row0: int
    row1: int
    col0: int
    col1: int

    @property
    def width(self) -> int:
        return self.col1 - self.col0

    @property
    def height(self) -> int:
        return self.row1 - self.row0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.col0 + self.col1) / 2.0, (self.row0 + self.row1) / 2.0)

    def slices(self):
        return slice(self.row0, self.row1), slice(self.col0, self.col1)

    def mask(self, shape) -> np.ndarray:
        m = np.zeros(shape[:2], dtype=bool)
        m[self.slices()] = True
        return m


def _round(x: float) -> int:
    return int(np.floor(x + 0.5))


def compute_roi(bb2: ImageBox, image_shape=None) -> Roi2:
    """Box of the pepper's size moved up by half its height (image rows grow downward)."""
    if not (bb2.width > 0 and bb2.height > 0):
        raise DegenerateRoi("pepper box has no extent")
    row0 = _round(bb2.cy - bb2.height)
    row1 = _round(bb2.cy)
    col0 = _round(bb2.cx - bb2.width / 2.0)
    col1 = _round(bb2.cx + bb2.width / 2.0)
    if image_shape is not None:
        h, w = image_shape[:2]
        row0, row1 = max(row0, 0), min(row1, h)
        col0, col1 = max(col0, 0), min(col1, w)
    if row1 <= row0 or col1 <= col0:
        raise DegenerateRoi(f"ROI rows [{row0},{row1}) cols [{col0},{col1}) is empty")
    return Roi2(row0, row1, col0, col1)


# ---------------------------------------------------------------- scorers


class PixelScorer(abc.ABC):
    """Per-pixel peduncle confidence in [0, 1]; zero outside the ROI."""

    name = "abstract"

    @abc.abstractmethod
    def _score(self, image: np.ndarray) -> np.ndarray:
        ...

    def score(self, image: np.ndarray, roi: Roi2 | None = None) -> np.ndarray:
        raw = np.clip(np.asarray(self._score(image), dtype=np.float64), 0.0, 1.0)
        if raw.shape != image.shape[:2]:
            raise ScorerFailure(f"{self.name} scorer returned shape {raw.shape}, expected {image.shape[:2]}")
        if roi is None:
            return raw
        out = np.zeros_like(raw)
        out[roi.slices()] = raw[roi.slices()]
        return out


class GaussianPeduncleScorer(PixelScorer):
    """Color-only scorer: ``exp(-m^2 / 2)`` for Mahalanobis distance ``m``."""

    name = "gaussian"

    def __init__(self, model: GaussianColorModel):
        self.model = model

    def _score(self, image):
        return np.exp(-0.5 * self.model.mahalanobis_sq(rgb_to_rotated_hsv(image)))


class ScoreMapScorer(PixelScorer):
    """Precomputed confidence map, from an array or a 16-bit PGM file."""

    name = "scoremap"

    def __init__(self, source):
        self.source = source

    def _score(self, image):
        if isinstance(self.source, np.ndarray):
            return self.source
        try:
            return read_score_map(self.source)
        except (OSError, ValueError) as exc:
            raise ScorerFailure(f"cannot load score map {self.source}: {exc}") from exc


def pixel_features(image: np.ndarray) -> np.ndarray:
    """Per-pixel [h/360, s, v, |grad v|, row/H] as an (H, W, 5) array."""
    hsv = rgb_to_rotated_hsv(image)
    v = hsv[..., 2]
    # np.gradient needs two samples along an axis; thin images get zero there
    gy = np.gradient(v, axis=0) if v.shape[0] > 1 else np.zeros_like(v)
    gx = np.gradient(v, axis=1) if v.shape[1] > 1 else np.zeros_like(v)
    h = image.shape[0]
    rows = np.broadcast_to((np.arange(h) / max(h - 1, 1))[:, None], image.shape[:2])
    return np.stack([hsv[..., 0] / 360.0, hsv[..., 1], hsv[..., 2], np.hypot(gx, gy), rows], axis=-1)


@dataclass
class PatchClassifier(PixelScorer):
    """Logistic regression over :func:`pixel_features`."""

    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    epochs: int = field(default=0, compare=False)
    name = "patch"

    def decision(self, features: np.ndarray) -> np.ndarray:
        z = (features - self.feature_mean) / self.feature_scale
        return z @ self.weights + self.bias

    def _score(self, image):
        return _sigmoid(self.decision(pixel_features(image)))

    def to_json(self) -> dict:
        return {
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "feature_mean": [float(v) for v in self.feature_mean],
            "feature_scale": [float(v) for v in self.feature_scale],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PatchClassifier":
        n = len(doc["weights"])
        return cls(
            np.asarray(doc["weights"], dtype=np.float64),
            float(doc["bias"]),
            np.asarray(doc.get("feature_mean", [0.0] * n), dtype=np.float64),
            np.asarray(doc.get("feature_scale", [1.0] * n), dtype=np.float64),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "PatchClassifier":
        return cls.from_json(json.loads(Path(path).read_text()))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def train_patch_classifier(images, positive_masks, negative_masks, lr=0.5, max_epochs=500, tol=1e-6):
    """Class-balanced full-batch gradient descent on the logistic loss.

    Pixels in neither mask are ignored. Stops when the loss improves by less
    than ``tol`` or after ``max_epochs``.
    """
    feats, labels = [], []
    for img, pos, neg in zip(images, positive_masks, negative_masks):
        f = pixel_features(np.asarray(img))
        pos = np.asarray(pos, dtype=bool)
        neg = np.asarray(neg, dtype=bool) & ~pos
        feats += [f[pos], f[neg]]
        labels += [np.ones(pos.sum()), np.zeros(neg.sum())]
    x = np.concatenate(feats) if feats else np.empty((0, 5))
    y = np.concatenate(labels) if labels else np.empty(0)
    if not np.any(y == 1):
        raise NoPositives("no positive pixels annotated")
    if not np.any(y == 0):
        raise NoNegatives("no negative pixels annotated")
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale < 1e-12] = 1.0
    z = (x - mean) / scale
    n_pos, n_neg = (y == 1).sum(), (y == 0).sum()
    sw = np.where(y == 1, 0.5 / n_pos, 0.5 / n_neg)
    w = np.zeros(z.shape[1])
    b = 0.0
    prev = np.inf
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        m = z @ w + b
        p = _sigmoid(m)
        loss = float(np.sum(sw * (np.logaddexp(0.0, m) - y * m)))
        if prev - loss < tol:
            break
        prev = loss
        g = sw * (p - y)
        w -= lr * (z.T @ g)
        b -= lr * float(g.sum())
    return PatchClassifier(w, b, mean, scale, epochs=epoch)


def score_pixels(scorer: PixelScorer, image: np.ndarray, roi: Roi2) -> np.ndarray:
    return scorer.score(image, roi)


# ---------------------------------------------------------------- 3D filter


def peduncle_bbox3(pepper_bb3: Aabb3, h_offset: float = 0.05) -> Aabb3:
    """Square footprint of side ``max(w_sp, l_sp)`` around the pepper box centre,
    spanning ``h_offset`` either side of the pepper top."""
    if not h_offset > 0:
        raise ValueError("h_offset must be positive")
    size = pepper_bb3.max - pepper_bb3.min
    half = max(size[0], size[1]) / 2.0
    cx = (pepper_bb3.min[0] + pepper_bb3.max[0]) / 2.0
    cy = (pepper_bb3.min[1] + pepper_bb3.max[1]) / 2.0
    top = pepper_bb3.max[2]
    return Aabb3(np.array([cx - half, cy - half, top - h_offset]), np.array([cx + half, cy + half, top + h_offset]))


@dataclass(frozen=True)
class FilterParams:
    threshold: float = 0.5
    color_threshold: float = -4.0
    downsample_radius: float = 0.002
    cluster_tolerance: float = 0.01
    cluster_min: int = MIN_PEDUNCLE_POINTS
    cluster_max: int = 250_000


STEP_NAMES = ("threshold", "project", "remove_pepper", "bbox", "cluster")


@dataclass
class FilterTrace:
    """Surviving counts per step plus the selected cluster.

    Counts for the first four steps are pixels/points; the cluster step
    counts downsampled points. ``pixels`` are the image pixels whose points
    fell into the selected cluster.
    """

    counts: dict
    cloud: ColorPointCloud
    pixels: np.ndarray
    stage_pixels: dict = field(default_factory=dict)


def filter_peduncle_steps(
    score_map: np.ndarray,
    frame: RgbdFrame,
    pepper_model: GaussianColorModel,
    bb3: Aabb3,
    params: FilterParams = FilterParams(),
) -> FilterTrace:
    score_map = np.asarray(score_map, dtype=np.float64)
    if score_map.shape != frame.shape:
        raise ValueError(f"score map {score_map.shape} does not match frame {frame.shape}")
    counts = {}
    stage = {}
    # 1. threshold the classification scores
    mask = score_map >= params.threshold
    counts["threshold"] = int(mask.sum())
    # 2. project surviving pixels with their depth
    cloud = project_to_cloud(frame, mask)
    counts["project"] = len(cloud)
    stage["project"] = cloud.pixels
    # 3. delete points the pepper color model accepts
    if len(cloud):
        keep = pepper_model.log_likelihood(rgb_to_rotated_hsv(cloud.colors)) < params.color_threshold
        cloud = cloud.subset(np.nonzero(keep)[0])
    counts["remove_pepper"] = len(cloud)
    # 4. delete points outside the peduncle box
    if len(cloud):
        cloud = cloud.subset(np.nonzero(bb3.contains(cloud.points))[0])
    counts["bbox"] = len(cloud)
    stage["bbox"] = cloud.pixels
    # 5. downsample, cluster, keep the largest cluster
    empty = ColorPointCloud.empty(with_pixels=True)
    if len(cloud) == 0:
        counts["cluster"] = 0
        return FilterTrace(counts, empty, np.empty((0, 2), dtype=np.int64), stage)
    down, inverse = voxel_downsample(cloud, params.downsample_radius, return_inverse=True)
    clusters = cluster_indices(
        down.points, params.cluster_tolerance, params.cluster_min, params.cluster_max
    )
    if not clusters:
        counts["cluster"] = 0
        return FilterTrace(counts, empty, np.empty((0, 2), dtype=np.int64), stage)
    best = clusters[0]
    counts["cluster"] = len(best)
    member = np.zeros(len(down), dtype=bool)
    member[best] = True
    pixels = cloud.pixels[member[inverse]]
    return FilterTrace(counts, down.subset(best), pixels, stage)


def filter_peduncle_points(score_map, frame, pepper_model, bb3, params: FilterParams = FilterParams()):
    return filter_peduncle_steps(score_map, frame, pepper_model, bb3, params).cloud


@dataclass(frozen=True)
class CutPoseEstimate:
    position: np.ndarray
    orientation: np.ndarray
    support_count: int

    @property
    def approach(self) -> np.ndarray:
        return self.orientation[:, 2].copy()

    @property
    def blade_normal(self) -> np.ndarray:
        return self.orientation[:, 1].copy()

    def matrix(self) -> np.ndarray:
        t = np.eye(4)
        t[:3, :3] = self.orientation
        t[:3, 3] = self.position
        return t


def estimate_cutting_pose(points, min_points: int = MIN_PEDUNCLE_POINTS) -> CutPoseEstimate:
    """Centroid of the peduncle points with a level blade approaching along world +x."""
    pts = points.points if isinstance(points, ColorPointCloud) else np.asarray(points, dtype=np.float64)
    pts = pts.reshape(-1, 3)
    if len(pts) < min_points:
        raise NoPeduncle(f"{len(pts)} peduncle points, need at least {min_points}")
    return CutPoseEstimate(pts.mean(axis=0), CUT_ORIENTATION.copy(), len(pts))
