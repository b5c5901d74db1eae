"""Simulated peduncle detector producing noisy per-class score maps.

Stands in for a learned segmentation network: each rendered pixel gets a
confidence drawn around a per-class mean, so peduncles score high, stems
(which look alike) score in between and everything else scores low.
"""
from __future__ import annotations

import numpy as np

from ..camera import RgbdFrame
from .render import pose_seed
from .scene import BACKGROUND, LEAF, PEDUNCLE, PEPPER, STEM, TRELLIS

# (mean, stddev) of the confidence per ground-truth class
CLASS_SCORES = {
    BACKGROUND: (0.05, 0.05),
    TRELLIS: (0.1, 0.1),
    PEPPER: (0.35, 0.15),
    LEAF: (0.3, 0.15),
    STEM: (0.55, 0.15),
    PEDUNCLE: (0.75, 0.15),
}
_SALT = 0xD37EC7


def simulated_score_map(frame: RgbdFrame, seed: int, class_scores: dict | None = None) -> np.ndarray:
    """Confidence map in [0, 1] for a frame carrying ground-truth labels."""
    if frame.labels is None:
        raise ValueError("frame has no ground-truth labels")
    table = CLASS_SCORES if class_scores is None else class_scores
    ss = pose_seed(seed, frame.camera_pose)
    rng = np.random.default_rng(np.random.SeedSequence([_SALT, *ss.entropy]))
    noise = rng.standard_normal(frame.shape)
    mean = np.zeros(frame.shape)
    std = np.zeros(frame.shape)
    for label, (m, s) in table.items():
        sel = frame.labels == label
        mean[sel] = m
        std[sel] = s
    return np.clip(mean + std * noise, 0.0, 1.0)
