"""Rotated-HSV conversion and the diagonal Gaussian pixel classifier.

Hue is rotated by +90 degrees so red sits away from the 0/360 seam. The
classifier scores a pixel ``x`` as::

    log p(x) = -1/2 log(2 pi) - 1/2 log det(Sigma) - 1/2 (x - mu)^T Sigma^-1 (x - mu)

with diagonal ``Sigma``. The normalising term keeps a single ``(2 pi)^(-1/2)``
factor as published rather than the 3-D ``(2 pi)^(-3/2)``; it only shifts
every score by a constant, so thresholds calibrated against it stay valid.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import TooFewPixels

HUE_ROTATION = 90.0
VARIANCE_FLOOR = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def rgb_to_rotated_hsv(rgb) -> np.ndarray:
    """RGB (0..255) to rotated HSV: hue in degrees [0, 360), s and v in [0, 1].

    Accepts a single triple or any array with a trailing axis of 3.
    Achromatic pixels get pre-rotation hue 0, i.e. rotated hue 90.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if np.any(arr < 0) or np.any(arr > 255):
        raise ValueError("RGB channels must lie in 0..255")
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    mx = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        mx == r,
        np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0, 60.0 * hue, 0.0)
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    val = mx / 255.0
    rot = np.mod(hue + HUE_ROTATION, 360.0)
    return np.stack([rot, sat, val], axis=-1)


def wrap_hue(delta):
    """Hue difference wrapped into (-180, 180]."""
    return 180.0 - np.mod(180.0 - np.asarray(delta, dtype=np.float64), 360.0)


@dataclass(frozen=True)
class GaussianColorModel:
    """Diagonal Gaussian over rotated-HSV pixels; ``sigma`` holds variances."""

    mu: np.ndarray
    sigma: np.ndarray
    precomputed_constant: float = field(init=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).reshape(3).copy()
        sigma = np.asarray(self.sigma, dtype=np.float64).reshape(3).copy()
        if np.any(~np.isfinite(sigma)) or np.any(sigma <= 0):
            raise ValueError(f"variances must be positive, got {sigma}")
        mu[0] = mu[0] % 360.0
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        const = -_HALF_LOG_2PI - 0.5 * float(np.sum(np.log(sigma)))
        object.__setattr__(self, "precomputed_constant", const)

    def mahalanobis_sq(self, hsv) -> np.ndarray:
        x = np.asarray(hsv, dtype=np.float64)
        d = np.stack(
            [wrap_hue(x[..., 0] - self.mu[0]), x[..., 1] - self.mu[1], x[..., 2] - self.mu[2]], axis=-1
        )
        return np.sum(d * d / self.sigma, axis=-1)

    def log_likelihood(self, hsv):
        return self.precomputed_constant - 0.5 * self.mahalanobis_sq(hsv)

    def to_json(self) -> dict:
        return {"mu": [float(v) for v in self.mu], "sigma": [float(v) for v in self.sigma]}

    @classmethod
    def from_json(cls, doc: dict) -> "GaussianColorModel":
        return cls(doc["mu"], doc["sigma"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GaussianColorModel":
        return cls.from_json(json.loads(Path(path).read_text()))


def log_likelihood(model: GaussianColorModel, pixel) -> np.ndarray | float:
    out = model.log_likelihood(pixel)
    return float(out) if np.ndim(out) == 0 else out


def fit_gaussian(pixels, variance_floor: float = VARIANCE_FLOOR) -> GaussianColorModel:
    """Fit mean and population variance per channel.

    Hue uses the circular mean; its variance is the mean squared residual
    after wrapping each hue into (-180, 180] around that mean.
    """
    x = np.asarray(pixels, dtype=np.float64).reshape(-1, 3)
    if len(x) < 2:
        raise TooFewPixels(f"need at least 2 pixels, got {len(x)}")
    ang = np.deg2rad(x[:, 0])
    mean_h = math.degrees(math.atan2(np.sin(ang).mean(), np.cos(ang).mean())) % 360.0
    res_h = wrap_hue(x[:, 0] - mean_h)
    var = np.array([np.mean(res_h**2), x[:, 1].var(), x[:, 2].var()])
    mu = np.array([mean_h, x[:, 1].mean(), x[:, 2].mean()])
    return GaussianColorModel(mu, np.maximum(var, variance_floor))


def segment_image(model: GaussianColorModel, image: np.ndarray, threshold: float):
    """Per-pixel log-likelihood and the mask ``score >= threshold``."""
    scores = model.log_likelihood(rgb_to_rotated_hsv(image))
    return scores >= threshold, scores
