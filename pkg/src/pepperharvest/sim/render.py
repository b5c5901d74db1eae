"""Software RGB-D renderer: point splatting with a z-buffer."""
from __future__ import annotations

import hashlib

import numpy as np

from ..camera import Intrinsics, RgbdFrame, invert_pose
from ..geometry.kernels import zbuffer
from .scene import PEDUNCLE, PEPPER, TRELLIS, Scene

NEAR = 0.05
FAR = 4.0


def pose_seed(seed: int, pose: np.ndarray) -> np.random.SeedSequence:
    digest = hashlib.sha256(np.round(np.asarray(pose, dtype=np.float64), 9).tobytes()).digest()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")])


def splat_points(points, radii, pose, intrinsics: Intrinsics, depth=None, index=None):
    """Z-buffer world points into (depth, index) buffers; returns them.

    A point of world radius ``r`` at depth ``z`` covers a disc of
    ``floor(r * fx / z + 0.5)`` pixels around its projection.
    """
    k = intrinsics
    inv = invert_pose(pose)
    cam = np.asarray(points, dtype=np.float64) @ inv[:3, :3].T + inv[:3, 3]
    z = cam[:, 2]
    keep = (z > NEAR) & (z < FAR)
    ids = np.nonzero(keep)[0]
    z = z[keep]
    u = k.fx * cam[keep, 0] / z + k.cx
    v = k.fy * cam[keep, 1] / z + k.cy
    rad = np.floor(np.asarray(radii, dtype=np.float64)[keep] * k.fx / z + 0.5).astype(np.int64)
    inb = (u > -rad - 1) & (u < k.width + rad) & (v > -rad - 1) & (v < k.height + rad)
    ids, z, u, v, rad = ids[inb], z[inb], u[inb], v[inb], rad[inb]
    if depth is None:
        depth = np.full((k.height, k.width), np.inf)
    if index is None:
        index = np.full((k.height, k.width), -1, dtype=np.int64)
    local = np.full(depth.shape, -1, dtype=np.int64)
    zbuffer(
        np.ascontiguousarray(u), np.ascontiguousarray(v), np.ascontiguousarray(z),
        np.ascontiguousarray(rad), depth, local,
    )
    hit = local >= 0
    index[hit] = ids[local[hit]]
    return depth, index


def _plane_depth(pose, intrinsics: Intrinsics, plane_y: float) -> np.ndarray:
    k = intrinsics
    cols, rows = np.meshgrid(np.arange(k.width), np.arange(k.height))
    rays = np.stack([(cols - k.cx) / k.fx, (rows - k.cy) / k.fy, np.ones(cols.shape)], axis=-1)
    dy = rays @ pose[:3, :3][1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (plane_y - pose[1, 3]) / dy
    return np.where((t > NEAR) & (t < FAR) & np.isfinite(t), t, np.inf)


def render_rgbd(
    scene: Scene,
    pose: np.ndarray,
    intrinsics: Intrinsics | None = None,
    noise: bool = True,
    exclude: tuple[int, ...] | list[int] = (),
) -> RgbdFrame:
    """Render a frame with ground-truth ``labels`` and ``instances``.

    ``exclude`` lists pepper ids already harvested; their fruit and peduncle
    points are skipped. Noise is seeded from the scene seed and the pose.
    """
    k = intrinsics or Intrinsics.default()
    pose = np.asarray(pose, dtype=np.float64)
    keep = None
    if len(exclude):
        gone = np.isin(scene.instances, np.asarray(list(exclude))) & np.isin(scene.labels, [PEPPER, PEDUNCLE])
        keep = np.nonzero(~gone)[0]
    pts = scene.points if keep is None else scene.points[keep]
    rad = scene.splat if keep is None else scene.splat[keep]
    depth = _plane_depth(pose, k, scene.trellis_y)
    depth, index = splat_points(pts, rad, pose, k, depth=depth)
    hit = index >= 0
    src = index[hit] if keep is None else keep[index[hit]]

    h, w = depth.shape
    rgb = np.empty((h, w, 3), dtype=np.float64)
    rgb[...] = scene.trellis_color
    rgb[hit] = scene.colors[src]
    labels = np.where(np.isfinite(depth), TRELLIS, 0).astype(np.int8)
    labels[hit] = scene.labels[src]
    instances = np.full((h, w), -1, dtype=np.int32)
    instances[hit] = scene.instances[src]
    depth = np.where(np.isfinite(depth), depth, 0.0)

    spec = scene.spec
    if noise and (spec.color_noise > 0 or spec.depth_noise > 0):
        rng = np.random.default_rng(pose_seed(spec.rng_seed, pose))
        rgb = rgb + rng.normal(0.0, spec.color_noise, rgb.shape)
        dn = rng.normal(0.0, spec.depth_noise, depth.shape)
        depth = np.where(depth > 0, np.maximum(depth + dn, 1e-3), 0.0)
    rgb = np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)
    return RgbdFrame(rgb, depth, k, pose, labels=labels, instances=instances)
