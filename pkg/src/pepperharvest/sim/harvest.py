"""Harvest attempts and the row-level state machine over a simulated crop row.

Outcomes come from surrogate models: attachment needs a well-aligned,
low-curvature, unobstructed contact on the true fruit surface; detachment
needs the cut to land close to the true peduncle centroid with a clear
blade path. Small Bernoulli failure rates model everything else.

Failure categories:

    a  peduncle not detected        f  obstruction of peduncle
    b  peduncle partially cut       g  difficult sweet pepper
    c  peduncle moved               h  obstruction of sweet pepper
    d  difficult peduncle           i  attachment failure
    e  path planning failure
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..camera import Intrinsics, RgbdFrame, facing_row
from ..color import GaussianColorModel
from ..detect import DetectParams, PepperTarget, close_range_viewpoint, detect_peppers, select_target
from ..errors import DegenerateRoi, NoCandidates, NoPeduncle
from ..grasp import GraspCandidate, GraspWeights, rank_grasps
from ..peduncle import (
    CutPoseEstimate,
    FilterParams,
    GaussianPeduncleScorer,
    PixelScorer,
    ScoreMapScorer,
    compute_roi,
    estimate_cutting_pose,
    filter_peduncle_steps,
    peduncle_bbox3,
)
from .detector import simulated_score_map
from .render import render_rgbd
from .scene import PEPPER, Scene
from .trajectory import Trajectory, TrajectoryOffsets, Workspace, plan_trajectory

CATEGORIES = {
    "a": "Peduncle not detected",
    "b": "Peduncle partially cut",
    "c": "Peduncle moved",
    "d": "Difficult peduncle",
    "e": "Path planning failure",
    "f": "Obstruction of peduncle",
    "g": "Difficult sweet pepper",
    "h": "Obstruction of sweet pepper",
    "i": "Attachment failure",
}
STAGES = ("detection", "grasp", "peduncle", "attach", "detach", "place")
# mean and stddev in seconds
DEFAULT_TIMING = {
    "detection": (4.3, 1.2),
    "grasp": (0.9, 0.5),
    "peduncle": (1.4, 2.2),
    "attach": (6.7, 4.7),
    "detach": (14.5, 2.9),
    "place": (9.2, 2.4),
}
# color models calibrated on rendered simulator pixels (variances widened)
SIM_PEPPER_MODEL = GaussianColorModel([90.0, 0.85, 0.6], [50.0, 0.01, 0.02])
SIM_PEDUNCLE_MODEL = GaussianColorModel([162.0, 0.55, 0.44], [200.0, 0.01, 0.01])


@dataclass(frozen=True)
class Tolerances:
    alpha_max: float = math.pi / 4
    c_max: float = 0.1
    suction_radius: float = 0.02
    blade_half_width: float = 0.02
    eps_attach: float = 0.02
    eps_cut: float = 0.02
    contact_tolerance: float = 0.01
    difficult_attach_failure: float = 0.7
    peduncle_match: float = 0.06


@dataclass(frozen=True)
class HarvestParams:
    pepper_model: GaussianColorModel = SIM_PEPPER_MODEL
    peduncle_model: GaussianColorModel = SIM_PEDUNCLE_MODEL
    detect: DetectParams = DetectParams(threshold=-6.0)
    filter: FilterParams = FilterParams(threshold=0.6, color_threshold=-6.0)
    h_offset: float = 0.05
    weights: GraspWeights = GraspWeights()
    patch_radius: float = 0.02
    angle_threshold: float = math.pi / 4
    max_attempts: int = 5
    standoff: float = 0.4
    vertical_offset: float = 0.1
    long_range_standoff: float = 0.9
    camera_height: float = 0.9
    platform_step: float = 0.5
    reach_half_width: float = 0.3
    place_offset: tuple[float, float, float] = (0.0, 0.35, 0.6)
    offsets: TrajectoryOffsets = TrajectoryOffsets()
    workspace: Workspace = Workspace()
    tolerances: Tolerances = Tolerances()
    scorer: str = "scoremap"
    patch_scorer: PixelScorer | None = None
    timing: dict = field(default_factory=lambda: dict(DEFAULT_TIMING))
    intrinsics: Intrinsics = Intrinsics.default()


@dataclass
class AttemptRecord:
    pepper_id: int
    attempt_index: int
    modified: bool
    pepper_detected: bool
    peduncle_detected: bool
    attached: bool
    harvested: bool
    failure_category: str | None
    durations: dict = field(default_factory=dict)
    cut_error: float | None = None
    scene: int = 0

    def __post_init__(self):
        chain = (self.pepper_detected, self.peduncle_detected, self.attached, self.harvested)
        for earlier, later in zip(chain, chain[1:]):
            if later and not earlier:
                raise ValueError(f"stage outcomes not monotone: {chain}")
        if self.harvested != (self.failure_category is None):
            raise ValueError("a failure category is required exactly when the attempt failed")
        if self.failure_category is not None and self.failure_category not in CATEGORIES:
            raise ValueError(f"unknown failure category {self.failure_category!r}")

    def to_json(self) -> dict:
        return {
            "pepper_id": self.pepper_id,
            "attempt_index": self.attempt_index,
            "modified": self.modified,
            "pepper_detected": self.pepper_detected,
            "peduncle_detected": self.peduncle_detected,
            "attached": self.attached,
            "harvested": self.harvested,
            "failure_category": self.failure_category,
            "durations": {k: self.durations[k] for k in STAGES if k in self.durations},
            "cut_error": self.cut_error,
            "scene": self.scene,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AttemptRecord":
        return cls(**doc)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass
class AttemptInputs:
    """Perception and planning results handed to the outcome model."""

    pepper_detected: bool = True
    cut: CutPoseEstimate | None = None
    grasp: GraspCandidate | None = None
    trajectory: Trajectory | None = None
    platform: np.ndarray = field(default_factory=lambda: np.zeros(3))
    camera: np.ndarray | None = None
    first_attempt: bool = True


def attempt_rng(seed: int, pepper_id: int, attempt_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(pepper_id) + 1, int(attempt_index)]))


def _lognormal(rng, mean, std):
    s2 = math.log1p((std / mean) ** 2)
    return float(rng.lognormal(math.log(mean) - 0.5 * s2, math.sqrt(s2)))


def _occluded_fraction(scene: Scene, camera, targets) -> float:
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    if len(targets) == 0 or not scene.leaves:
        return 0.0
    hit = np.zeros(len(targets), dtype=bool)
    for leaf in scene.leaves:
        for i, t in enumerate(targets):
            if not hit[i] and leaf.intersects_segment(camera, t):
                hit[i] = True
    return float(hit.mean())


def pepper_occlusion(scene: Scene, pepper_id: int, camera=None, samples: int = 200) -> float:
    """Fraction of the camera-facing fruit surface hidden behind leaves."""
    p = scene.pepper(pepper_id)
    if camera is None:
        camera = close_range_viewpoint(p.center)[:3, 3]
    pts, nrm = scene.pepper_points(pepper_id)
    front = np.einsum("ij,ij->i", nrm, camera - pts) > 0
    pts = pts[front]
    step = max(1, len(pts) // samples)
    return _occluded_fraction(scene, camera, pts[::step])


def peduncle_occlusion(scene: Scene, pepper_id: int, camera=None) -> float:
    p = scene.pepper(pepper_id)
    if camera is None:
        camera = close_range_viewpoint(p.center)[:3, 3]
    return _occluded_fraction(scene, camera, p.peduncle_curve)


def simulate_attempt(
    scene: Scene,
    pepper_id: int,
    inputs: AttemptInputs,
    tolerances: Tolerances = Tolerances(),
    rng: np.random.Generator | None = None,
    attempt_index: int = 0,
    modified: bool = False,
    workspace: Workspace = Workspace(),
    timing: dict | None = None,
) -> AttemptRecord:
    """Score one attempt against ground truth; raises UnknownPepper."""
    p = scene.pepper(pepper_id)
    rng = rng if rng is not None else attempt_rng(scene.spec.rng_seed, pepper_id, attempt_index)
    timing = DEFAULT_TIMING if timing is None else timing
    # fixed draw order keeps every outcome independent of the branch taken
    u_shape, u_attach, u_cut = rng.random(3)
    times = {k: _lognormal(rng, *timing[k]) for k in STAGES}
    cam = inputs.camera if inputs.camera is not None else close_range_viewpoint(p.center)[:3, 3]
    tol = tolerances

    def record(stages, cat, det=True, ped=False, att=False, harv=False, cut_error=None):
        if not inputs.first_attempt:
            stages = [s for s in stages if s not in ("detection", "grasp", "peduncle")]
        return AttemptRecord(
            pepper_id, attempt_index, modified, det, ped, att, harv, cat,
            {k: times[k] for k in stages}, cut_error, scene.spec.rng_seed,
        )

    if not inputs.pepper_detected:
        cat = "h" if pepper_occlusion(scene, pepper_id, cam) >= 0.3 else "g"
        return record(["detection"], cat, det=False)
    def missed_peduncle():
        if p.difficult_peduncle:
            return "d"
        return "f" if peduncle_occlusion(scene, pepper_id, cam) >= 0.5 else "a"

    if inputs.cut is None:
        return record(["detection", "peduncle"], missed_peduncle())
    # a cut pose far from the true peduncle is something else (leaf, stem)
    err = float(np.linalg.norm(inputs.cut.position - p.peduncle_centroid))
    if err > tol.peduncle_match:
        return record(["detection", "peduncle"], missed_peduncle(), cut_error=err)
    perceived = ["detection", "peduncle", "grasp"]
    if inputs.grasp is None:
        return record(perceived, "g", ped=True)
    if inputs.trajectory is not None and not np.all(
        workspace.reachable(inputs.trajectory.positions(), inputs.platform)
    ):
        return record(perceived, "e", ped=True)

    # attachment
    g = inputs.grasp
    pts, nrm = scene.pepper_points(pepper_id)
    d = np.linalg.norm(pts - g.position, axis=1)
    j = int(np.argmin(d))
    contact, true_normal = pts[j], nrm[j]
    app = g.approach / np.linalg.norm(g.approach)
    angle = math.acos(float(np.clip(-app @ true_normal, -1.0, 1.0)))
    attach_stages = perceived + ["attach"]
    if p.difficult_shape and u_shape < tol.difficult_attach_failure:
        return record(attach_stages, "g", ped=True)
    if any(float(leaf.distance(contact)[0]) < tol.suction_radius for leaf in scene.leaves):
        return record(attach_stages, "h", ped=True)
    if d[j] > tol.contact_tolerance or angle > tol.alpha_max or g.curvature > tol.c_max:
        return record(attach_stages, "i", ped=True)
    if u_attach < tol.eps_attach:
        return record(attach_stages, "i", ped=True)

    # detachment
    cut = inputs.cut
    detach_stages = attach_stages + ["detach"]
    start = cut.position - 0.05 * cut.approach
    blocked = any(
        leaf.intersects_segment(start, cut.position) or float(leaf.distance(p.peduncle_centroid)[0]) < 0.01
        for leaf in scene.leaves
    )
    if blocked:
        return record(detach_stages, "f", ped=True, att=True, cut_error=err)
    if err > tol.blade_half_width:
        if p.difficult_peduncle:
            cat = "d"
        else:
            cat = "b" if err <= 1.5 * tol.blade_half_width else "c"
        return record(detach_stages, cat, ped=True, att=True, cut_error=err)
    if u_cut < tol.eps_cut:
        return record(detach_stages, "c", ped=True, att=True, cut_error=err)
    return record(detach_stages + ["place"], None, ped=True, att=True, harv=True, cut_error=err)


# ---------------------------------------------------------------- state machine


def identify(frame: RgbdFrame, target: PepperTarget) -> int:
    """Ground-truth pepper id behind most of a target's pixels, or -1."""
    if frame.instances is None:
        return -1
    r, c = target.cloud.pixels[:, 0], target.cloud.pixels[:, 1]
    ok = frame.labels[r, c] == PEPPER
    ids = frame.instances[r, c][ok]
    if len(ids) == 0:
        return -1
    vals, counts = np.unique(ids, return_counts=True)
    return int(vals[np.argmax(counts)])


def make_scorer(params: HarvestParams, frame: RgbdFrame, seed: int) -> PixelScorer:
    if params.scorer == "scoremap":
        return ScoreMapScorer(simulated_score_map(frame, seed))
    if params.scorer == "gaussian":
        return GaussianPeduncleScorer(params.peduncle_model)
    if params.scorer == "patch":
        if params.patch_scorer is None:
            raise ValueError("patch scorer selected but no classifier supplied")
        return params.patch_scorer
    raise ValueError(f"unknown scorer {params.scorer!r}")


@dataclass
class ClosePerception:
    frame: RgbdFrame
    target: PepperTarget | None
    cut: CutPoseEstimate | None = None
    ranked: list = field(default_factory=list)
    counts: dict = field(default_factory=dict)


def perceive_close(scene, long_target, params: HarvestParams, seed: int, exclude=()) -> ClosePerception:
    pose = close_range_viewpoint(long_target, params.standoff, params.vertical_offset)
    frame = render_rgbd(scene, pose, params.intrinsics, exclude=exclude)
    targets = detect_peppers(frame, params.pepper_model, params.detect)
    if not targets:
        return ClosePerception(frame, None)
    # re-identify the long-range target: nearest centroid
    target = min(targets, key=lambda t: (float(np.linalg.norm(t.centroid - long_target.centroid)), -t.cluster_size))
    out = ClosePerception(frame, target)
    try:
        roi = compute_roi(target.bb2, frame.shape)
        scores = make_scorer(params, frame, seed).score(frame.rgb, roi)
        box = peduncle_bbox3(target.bb3, params.h_offset)
        trace = filter_peduncle_steps(scores, frame, params.pepper_model, box, params.filter)
        out.counts = trace.counts
        out.cut = estimate_cutting_pose(trace.cloud, params.filter.cluster_min)
    except (DegenerateRoi, NoPeduncle):
        out.cut = None
    try:
        out.ranked = rank_grasps(
            target, frame.camera_position, params.patch_radius, params.weights, params.angle_threshold
        )
    except NoCandidates:
        out.ranked = []
    return out


def platform_positions(row_length: float, step: float) -> np.ndarray:
    n = max(1, int(math.ceil(row_length / step - 1e-9)))
    return (np.arange(n) + 0.5) * step


def harvest_pepper(scene, pepper_id, long_target, params: HarvestParams, seed, modified, platform, exclude):
    close = perceive_close(scene, long_target, params, seed, exclude)
    common = dict(tolerances=params.tolerances, modified=modified, workspace=params.workspace, timing=params.timing)
    cam = close.frame.camera_position
    if close.target is None:
        inputs = AttemptInputs(pepper_detected=False, platform=platform, camera=cam)
        return [simulate_attempt(scene, pepper_id, inputs, rng=attempt_rng(seed, pepper_id, 0), **common)]
    records = []
    place = np.asarray(platform) + np.asarray(params.place_offset)
    for k in range(params.max_attempts):
        grasp = close.ranked[k] if k < len(close.ranked) else None
        if grasp is None and k > 0:
            break
        traj = None
        if grasp is not None and close.cut is not None:
            traj = plan_trajectory(grasp, close.cut, params.offsets, close.frame.camera_pose, place)
        inputs = AttemptInputs(True, close.cut, grasp, traj, np.asarray(platform), cam, first_attempt=(k == 0))
        rec = simulate_attempt(scene, pepper_id, inputs, rng=attempt_rng(seed, pepper_id, k), attempt_index=k, **common)
        records.append(rec)
        if rec.harvested or not rec.peduncle_detected:
            break
    return records


def run_row(scene: Scene, params: HarvestParams = HarvestParams(), seed: int | None = None, modified: bool = False):
    """Drive the platform along the row, harvesting every reachable detection.

    At each stop the robot re-detects until nothing new is in reach, then
    advances by ``platform_step``. Peppers never attempted get one record
    with ``pepper_detected`` false at the end of the row.
    """
    seed = scene.spec.rng_seed if seed is None else seed
    row_y = scene.spec.row_y
    harvested: list[int] = []
    attempted: set[int] = set()
    visited: list[np.ndarray] = []
    records: list[AttemptRecord] = []
    for px in platform_positions(scene.spec.row_length, params.platform_step):
        platform = np.array([px, 0.0, 0.0])
        pose = facing_row([px, row_y - params.long_range_standoff, params.camera_height])
        while True:
            frame = render_rgbd(scene, pose, params.intrinsics, exclude=harvested)
            targets = [
                t
                for t in detect_peppers(frame, params.pepper_model, params.detect)
                if abs(t.centroid[0] - px) <= params.reach_half_width
                and all(np.linalg.norm(t.centroid - v) > 0.05 for v in visited)
            ]
            if not targets:
                break
            target = select_target(targets, pose[:3, 3])
            visited.append(target.centroid)
            pid = identify(frame, target)
            if pid < 0 or pid in attempted:
                continue
            attempted.add(pid)
            recs = harvest_pepper(scene, pid, target, params, seed, modified, platform, harvested)
            records += recs
            if recs[-1].harvested:
                harvested.append(pid)
    for p in scene.peppers:
        if p.id not in attempted:
            inputs = AttemptInputs(pepper_detected=False)
            records.append(
                simulate_attempt(
                    scene, p.id, inputs, params.tolerances, attempt_rng(seed, p.id, 0),
                    modified=modified, workspace=params.workspace, timing=params.timing,
                )
            )
    for r in records:
        r.scene = scene.spec.rng_seed
    return records
