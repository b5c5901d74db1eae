"""Synthetic greenhouse rows, an RGB-D renderer and the harvest-attempt simulator."""
from .dataset import DATASET_SPEC, compare_filtering, peduncle_dataset
from .detector import simulated_score_map
from .harvest import (
    CATEGORIES,
    AttemptRecord,
    HarvestParams,
    Tolerances,
    harvest_pepper,
    run_row,
    simulate_attempt,
)
from .render import render_rgbd
from .scene import Scene, SceneSpec, generate_scene
from .trajectory import Trajectory, TrajectoryOffsets, Workspace, plan_trajectory

__all__ = [
    "CATEGORIES",
    "DATASET_SPEC",
    "AttemptRecord",
    "HarvestParams",
    "Scene",
    "SceneSpec",
    "Tolerances",
    "Trajectory",
    "TrajectoryOffsets",
    "Workspace",
    "compare_filtering",
    "generate_scene",
    "harvest_pepper",
    "peduncle_dataset",
    "plan_trajectory",
    "render_rgbd",
    "run_row",
    "simulate_attempt",
    "simulated_score_map",
]
