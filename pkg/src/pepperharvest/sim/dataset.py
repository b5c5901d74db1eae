"""Standard close-range peduncle dataset and the filtered/unfiltered F1 comparison."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..camera import RgbdFrame
from ..detect import PepperTarget, close_range_viewpoint, detect_peppers
from ..errors import DegenerateRoi
from ..geometry import Aabb3
from ..metrics import PrCurve, best_f1, precision_recall
from ..peduncle import FilterParams, PixelScorer, Roi2, compute_roi, filter_peduncle_steps, peduncle_bbox3
from .detector import simulated_score_map
from .harvest import HarvestParams, identify
from .render import render_rgbd
from .scene import PEDUNCLE, SceneSpec, generate_scene

DATASET_SPEC = SceneSpec(row_length=1.0, pepper_count=2)


@dataclass
class PeduncleSample:
    frame: RgbdFrame
    scores: np.ndarray
    target: PepperTarget
    roi: Roi2
    box: Aabb3
    truth: np.ndarray
    pepper_id: int


def peduncle_dataset(
    n_frames: int = 200,
    seed: int = 0,
    spec: SceneSpec = DATASET_SPEC,
    params: HarvestParams = HarvestParams(),
    scorer: PixelScorer | None = None,
) -> list[PeduncleSample]:
    """Close-range frames of detected peppers with ROI-limited scores and truth.

    Scenes use seeds ``seed, seed + 1, ...``; every pepper whose close-range
    view yields a detection contributes one frame. ``truth`` marks peduncle
    pixels inside the ROI.
    """
    out: list[PeduncleSample] = []
    scene_seed = seed
    while len(out) < n_frames:
        scene = generate_scene(spec.with_(rng_seed=scene_seed))
        for p in scene.peppers:
            if len(out) >= n_frames:
                break
            frame = render_rgbd(scene, close_range_viewpoint(p.center, params.standoff, params.vertical_offset),
                                params.intrinsics)
            targets = [t for t in detect_peppers(frame, params.pepper_model, params.detect) if identify(frame, t) == p.id]
            if not targets:
                continue
            target = targets[0]
            try:
                roi = compute_roi(target.bb2, frame.shape)
            except DegenerateRoi:
                continue
            if scorer is None:
                scores = np.zeros(frame.shape)
                scores[roi.slices()] = simulated_score_map(frame, scene_seed)[roi.slices()]
            else:
                scores = scorer.score(frame.rgb, roi)
            truth = roi.mask(frame.shape) & (frame.labels == PEDUNCLE)
            out.append(PeduncleSample(frame, scores, target, roi, peduncle_bbox3(target.bb3, params.h_offset),
                                      truth, p.id))
        scene_seed += 1
    return out


def unfiltered_curve(samples: list[PeduncleSample], thresholds) -> PrCurve:
    """Pixel PR over ROI pixels using the raw scores."""
    total = None
    for s in samples:
        sl = s.roi.slices()
        c = precision_recall(s.scores[sl], s.truth[sl], thresholds)
        total = c if total is None else total + c
    return total


def filtered_curve(samples: list[PeduncleSample], thresholds, params: HarvestParams = HarvestParams()) -> PrCurve:
    """Pixel PR where the prediction is the pixel set of the selected 3D cluster."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    tp = np.zeros(len(thresholds), dtype=np.int64)
    fp = np.zeros_like(tp)
    fn = np.zeros_like(tp)
    for s in samples:
        n_true = int(s.truth.sum())
        for i, t in enumerate(thresholds):
            fparams = FilterParams(**{**params.filter.__dict__, "threshold": float(t)})
            trace = filter_peduncle_steps(s.scores, s.frame, params.pepper_model, s.box, fparams)
            px = trace.pixels
            hit = int(s.truth[px[:, 0], px[:, 1]].sum()) if len(px) else 0
            tp[i] += hit
            fp[i] += len(px) - hit
            fn[i] += n_true - hit
    return PrCurve.from_counts(thresholds, tp, fp, fn)


@dataclass
class F1Comparison:
    unfiltered: PrCurve
    filtered: PrCurve

    @property
    def best_unfiltered(self) -> tuple[float, float]:
        return best_f1(self.unfiltered)

    @property
    def best_filtered(self) -> tuple[float, float]:
        return best_f1(self.filtered)


def compare_filtering(samples, params: HarvestParams = HarvestParams(), fine: int = 256, coarse=None) -> F1Comparison:
    """Best-threshold F1 with and without the 3D post-filter.

    The unfiltered sweep uses ``fine`` thresholds over (0, 1]; the filtered
    sweep (much costlier) uses ``coarse`` thresholds, a subset of candidate
    values, so its best F1 can only be underestimated.
    """
    fine_t = np.linspace(0.0, 1.0, fine + 1)[1:]
    coarse_t = np.round(np.linspace(0.3, 0.9, 13), 6) if coarse is None else np.asarray(coarse, dtype=np.float64)
    return F1Comparison(unfiltered_curve(samples, fine_t), filtered_curve(samples, coarse_t, params))
