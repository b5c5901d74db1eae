"""Pinhole camera model, RGB-D frames and back-projection."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry.cloud import ColorPointCloud
from .imageio import read_pnm, write_pnm

# camera axes (x right, y down, z forward) expressed in the world frame for a
# camera looking along world +y with world z up
ROW_FACING = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 640
    height: int = 480

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @classmethod
    def default(cls) -> "Intrinsics":
        # close to an SR300 color stream at 640x480
        return cls(600.0, 600.0, 319.5, 239.5, 640, 480)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])


def pose_from(rotation: np.ndarray, position) -> np.ndarray:
    t = np.eye(4)
    t[:3, :3] = rotation
    t[:3, 3] = np.asarray(position, dtype=np.float64).reshape(3)
    return t


def facing_row(position) -> np.ndarray:
    """Camera-to-world pose for a camera at ``position`` looking along world +y."""
    return pose_from(ROW_FACING, position)


def invert_pose(pose: np.ndarray) -> np.ndarray:
    r = pose[:3, :3]
    out = np.eye(4)
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ pose[:3, 3]
    return out


@dataclass
class RgbdFrame:
    """Registered color image and z-depth (meters, 0 = invalid).

    ``labels`` and ``instances`` carry simulator ground truth when available.
    """

    rgb: np.ndarray
    depth: np.ndarray
    intrinsics: Intrinsics
    camera_pose: np.ndarray
    labels: np.ndarray | None = None
    instances: np.ndarray | None = None

    def __post_init__(self):
        if self.rgb.shape[:2] != self.depth.shape:
            raise ValueError(f"rgb {self.rgb.shape[:2]} and depth {self.depth.shape} differ")

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def camera_position(self) -> np.ndarray:
        return self.camera_pose[:3, 3].copy()


def project_pixels(frame: RgbdFrame, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """World coordinates of pixels using their depth (no validity check)."""
    k = frame.intrinsics
    d = frame.depth[rows, cols]
    cam = np.stack([(cols - k.cx) * d / k.fx, (rows - k.cy) * d / k.fy, d], axis=1)
    return cam @ frame.camera_pose[:3, :3].T + frame.camera_pose[:3, 3]


def project_to_cloud(frame: RgbdFrame, mask: np.ndarray) -> ColorPointCloud:
    """Back-project masked pixels with valid depth into a world-frame cloud."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != frame.shape:
        raise ValueError(f"mask {mask.shape} does not match frame {frame.shape}")
    rows, cols = np.nonzero(mask & (frame.depth > 0))
    pts = project_pixels(frame, rows, cols)
    return ColorPointCloud(pts, frame.rgb[rows, cols], np.stack([rows, cols], axis=1))


def world_to_pixel(frame_or_pose, intrinsics: Intrinsics, points: np.ndarray):
    """Project world points; returns (u, v, z) with z the camera-frame depth."""
    pose = frame_or_pose.camera_pose if isinstance(frame_or_pose, RgbdFrame) else frame_or_pose
    inv = invert_pose(pose)
    cam = np.asarray(points, dtype=np.float64).reshape(-1, 3) @ inv[:3, :3].T + inv[:3, 3]
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[:, 0] / z + intrinsics.cx
        v = intrinsics.fy * cam[:, 1] / z + intrinsics.cy
    return u, v, z


def write_frame(stem, frame: RgbdFrame) -> None:
    stem = Path(stem)
    write_pnm(stem.with_suffix(".ppm"), frame.rgb.astype(np.uint8))
    mm = np.clip(np.floor(frame.depth * 1000.0 + 0.5), 0, 65535).astype(np.uint16)
    write_pnm(stem.with_suffix(".pgm"), mm)
    k = frame.intrinsics
    meta = {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy, "pose": frame.camera_pose.tolist()}
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def read_frame(stem) -> RgbdFrame:
    stem = Path(stem)
    if stem.suffix in (".ppm", ".pgm", ".json"):
        stem = stem.with_suffix("")
    rgb = read_pnm(stem.with_suffix(".ppm"))
    depth = read_pnm(stem.with_suffix(".pgm")).astype(np.float64) / 1000.0
    meta = json.loads(stem.with_suffix(".json").read_text())
    h, w = depth.shape
    k = Intrinsics(meta["fx"], meta["fy"], meta["cx"], meta["cy"], w, h)
    pose = np.asarray(meta.get("pose", np.eye(4).tolist()), dtype=np.float64).reshape(4, 4)
    return RgbdFrame(rgb, depth, k, pose)
