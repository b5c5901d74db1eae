"""Netpbm (PPM/PGM) images, RGB-D frame files and score-map files.

Frames are stored as ``<stem>.ppm`` (P6 color), ``<stem>.pgm`` (P5 16-bit depth
in millimeters, 0 = invalid) and ``<stem>.json`` holding the intrinsics
``{fx, fy, cx, cy, pose}`` with ``pose`` a row-major 4x4 camera-to-world
transform.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _tokens(data: bytes, count: int):
    """Parse ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    i = 0
    while len(out) < count:
        while data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while data[i : i + 1] not in (b"\n", b"\r", b""):
                i += 1
            continue
        j = i
        while not data[j : j + 1].isspace():
            j += 1
        out.append(data[i:j])
        i = j
    return out, i + 1  # exactly one whitespace byte precedes the raster


def read_pnm(path) -> np.ndarray:
    """Read binary P5/P6. 16-bit samples are big-endian."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), start = _tokens(data, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise ValueError(f"{path}: unsupported magic {magic!r}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * channels
    arr = np.frombuffer(data, dtype=dtype, count=n, offset=start)
    arr = arr.astype(np.uint16 if maxval > 255 else np.uint8)
    return arr.reshape(h, w, channels) if channels == 3 else arr.reshape(h, w)


def write_pnm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise ValueError(f"unsupported image shape {img.shape}")
    if img.dtype == np.uint8 or img.dtype == bool:
        maxval, raw = 255, img.astype(np.uint8).tobytes()
    elif img.dtype == np.uint16:
        maxval, raw = 65535, img.astype(">u2").tobytes()
    else:
        raise ValueError(f"unsupported dtype {img.dtype}; use uint8 or uint16")
    h, w = img.shape[:2]
    Path(path).write_bytes(magic + f"\n{w} {h}\n{maxval}\n".encode() + raw)


def write_mask(path, mask: np.ndarray) -> None:
    write_pnm(path, np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8))


def read_mask(path) -> np.ndarray:
    img = read_pnm(path)
    if img.ndim == 3:
        img = img.max(axis=2)
    return img > 0


def write_score_image(path, scores: np.ndarray, lo: float | None = None, hi: float | None = None) -> dict:
    """16-bit PGM of ``scores`` affinely mapped from [lo, hi]; sidecar JSON records the range."""
    s = np.asarray(scores, dtype=np.float64)
    finite = s[np.isfinite(s)]
    if lo is None:
        lo = float(finite.min()) if finite.size else 0.0
    if hi is None:
        hi = float(finite.max()) if finite.size else 1.0
    span = hi - lo if hi > lo else 1.0
    q = np.clip(np.nan_to_num((s - lo) / span, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)
    write_pnm(path, np.floor(q * 65535 + 0.5).astype(np.uint16))
    meta = {"min": lo, "max": hi}
    Path(path).with_suffix(".json").write_text(json.dumps(meta) + "\n")
    return meta


def read_score_image(path) -> np.ndarray:
    raw = read_pnm(path).astype(np.float64) / 65535.0
    meta_path = Path(path).with_suffix(".json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        return meta["min"] + raw * (meta["max"] - meta["min"])
    return raw


def write_score_map(path, confidence: np.ndarray) -> None:
    """Confidence in [0, 1] as 16-bit PGM (value / 65535)."""
    c = np.clip(np.asarray(confidence, dtype=np.float64), 0.0, 1.0)
    write_pnm(path, np.floor(c * 65535 + 0.5).astype(np.uint16))


def read_score_map(path) -> np.ndarray:
    img = read_pnm(path)
    if img.dtype == np.uint16:
        return img.astype(np.float64) / 65535.0
    return img.astype(np.float64) / 255.0
