"""Straight-segment waypoint trajectories for attachment, separation and detachment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grasp import GraspCandidate
from ..peduncle import CutPoseEstimate

PHASES = ("close_range", "pre_grasp", "grasp", "separate", "cut_in", "cut_out", "place")


@dataclass(frozen=True)
class TrajectoryOffsets:
    pre_grasp_offset: float = 0.1
    seal_offset: float = 0.01
    separation_height: float = 0.05
    cut_clearance: float = 0.05
    cut_sweep: float = 0.03


@dataclass(frozen=True)
class Waypoint:
    phase: str
    pose: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]


@dataclass(frozen=True)
class Trajectory:
    waypoints: tuple[Waypoint, ...]

    def __post_init__(self):
        rank = [PHASES.index(w.phase) for w in self.waypoints]
        if rank != sorted(rank):
            raise ValueError("waypoint phases out of order")

    @property
    def phases(self) -> list[str]:
        return [w.phase for w in self.waypoints]

    def positions(self) -> np.ndarray:
        return np.stack([w.position for w in self.waypoints])

    def first(self, phase: str) -> Waypoint:
        for w in self.waypoints:
            if w.phase == phase:
                return w
        raise KeyError(phase)


@dataclass(frozen=True)
class Workspace:
    """Reachable box, expressed relative to the platform origin."""

    lo: tuple[float, float, float] = (-0.45, 0.3, 0.4)
    hi: tuple[float, float, float] = (0.45, 1.3, 1.5)

    def reachable(self, points, platform) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3) - np.asarray(platform, dtype=np.float64)
        return np.all((p >= self.lo) & (p <= self.hi), axis=1)


def approach_pose(position, approach) -> np.ndarray:
    """Tool pose whose z axis is ``approach`` and whose x axis is horizontal."""
    z = np.asarray(approach, dtype=np.float64)
    z = z / np.linalg.norm(z)
    ref = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    x = np.cross(ref, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    t = np.eye(4)
    t[:3, :3] = np.stack([x, y, z], axis=1)
    t[:3, 3] = position
    return t


def _at(rotation, position) -> np.ndarray:
    t = np.eye(4)
    t[:3, :3] = rotation
    t[:3, 3] = position
    return t


def plan_trajectory(
    grasp: GraspCandidate,
    cut: CutPoseEstimate,
    offsets: TrajectoryOffsets = TrajectoryOffsets(),
    close_range_pose: np.ndarray | None = None,
    place_position=None,
) -> Trajectory:
    """Close-range start, pre-grasp, seal, vertical separation, cut sweep along +x, place."""
    app = np.asarray(grasp.approach, dtype=np.float64)
    app = app / np.linalg.norm(app)
    gpos = np.asarray(grasp.position, dtype=np.float64)
    g_rot = approach_pose(gpos, app)[:3, :3]
    grasp_pt = gpos + offsets.seal_offset * app
    xhat = cut.approach
    wps = []
    if close_range_pose is not None:
        wps.append(Waypoint("close_range", np.asarray(close_range_pose, dtype=np.float64)))
    wps += [
        Waypoint("pre_grasp", _at(g_rot, gpos - offsets.pre_grasp_offset * app)),
        Waypoint("grasp", _at(g_rot, grasp_pt)),
        Waypoint("separate", _at(g_rot, grasp_pt + np.array([0.0, 0.0, offsets.separation_height]))),
        Waypoint("cut_in", _at(cut.orientation, cut.position - offsets.cut_clearance * xhat)),
        Waypoint("cut_in", _at(cut.orientation, cut.position + offsets.cut_sweep * xhat)),
        Waypoint("cut_out", _at(cut.orientation, cut.position - offsets.cut_clearance * xhat)),
    ]
    if place_position is not None:
        wps.append(Waypoint("place", _at(np.diag([1.0, -1.0, -1.0]), place_position)))
    return Trajectory(tuple(wps))
