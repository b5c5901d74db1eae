"""Precision/recall curves, PR-AUC, F1 and harvest success reporting."""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateCurve, LengthMismatch, ThresholdNotFound

CATEGORY_KEYS = tuple("abcdefghi")
STAGES = ("detection", "grasp", "peduncle", "attach", "detach", "place")
STAGE_LABELS = {
    "detection": "Pepper Detection",
    "grasp": "Grasp Selection",
    "peduncle": "Peduncle Detection",
    "attach": "Attach",
    "detach": "Detach",
    "place": "Place",
}

# Reference figures from the published field trial, for annotation only.
REFERENCE_AUC = {"crf_detector": 0.789, "pepper_segmentation": 0.735}
REFERENCE_PEDUNCLE_F1 = {
    "cnn_unfiltered": 0.313,
    "baseline_unfiltered": 0.132,
    "cnn_filtered": 0.564,
    "baseline_filtered": 0.302,
}
REFERENCE_SUCCESS = {
    "modified": {"detection": 99.0, "peduncle": 84.0, "attachment": 93.0, "harvest": 76.5, "avg_attempts": 2.5},
    "unmodified": {"detection": 93.0, "peduncle": 65.0, "attachment": 75.0, "harvest": 47.0, "avg_attempts": 1.9},
}
REFERENCE_TIMING = {
    "detection": (4.3, 1.2),
    "grasp": (0.9, 0.5),
    "peduncle": (1.4, 2.2),
    "attach": (6.7, 4.7),
    "detach": (14.5, 2.9),
    "place": (9.2, 2.4),
    "total": (36.9, 6.4),
}
REFERENCE_FAILURES_MODIFIED = {"a": 28, "b": 23, "c": 22, "d": 11, "e": 6, "f": 7, "g": 5, "h": 5, "i": 2}


# ---------------------------------------------------------------- PR curves


@dataclass(frozen=True)
class PrCurve:
    thresholds: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray

    def __post_init__(self):
        n = len(self.thresholds)
        if not (len(self.tp) == len(self.fp) == len(self.fn) == n):
            raise LengthMismatch("curve columns differ in length")

    @classmethod
    def from_counts(cls, thresholds, tp, fp, fn) -> "PrCurve":
        return cls(
            np.asarray(thresholds, dtype=np.float64),
            np.asarray(tp, dtype=np.int64),
            np.asarray(fp, dtype=np.int64),
            np.asarray(fn, dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.thresholds)

    @property
    def precision(self) -> np.ndarray:
        pred = self.tp + self.fp
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(pred > 0, self.tp / np.maximum(pred, 1), 1.0)

    @property
    def recall(self) -> np.ndarray:
        pos = self.tp + self.fn
        return np.where(pos > 0, self.tp / np.maximum(pos, 1), 0.0)

    @property
    def f1(self) -> np.ndarray:
        p, r = self.precision, self.recall
        s = p + r
        return np.where(s > 0, 2 * p * r / np.where(s > 0, s, 1.0), 0.0)

    def points(self) -> list[tuple[float, float, float]]:
        return [(float(t), float(p), float(r)) for t, p, r in zip(self.thresholds, self.precision, self.recall)]

    def __add__(self, other: "PrCurve") -> "PrCurve":
        if not np.array_equal(self.thresholds, other.thresholds):
            raise ValueError("curves use different thresholds")
        return PrCurve(self.thresholds, self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "precision", "recall"])
        for t, p, r in self.points():
            w.writerow([repr(t), repr(p), repr(r)])
        return buf.getvalue()


def default_thresholds(scores, n: int = 256) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        return np.linspace(0.0, 1.0, n)
    return np.linspace(float(s.min()), float(s.max()), n)


def precision_recall(scores, labels, thresholds=None) -> PrCurve:
    """Counts per threshold with a positive prediction meaning ``score >= t``."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    y = y.astype(bool)
    t = default_thresholds(s) if thresholds is None else np.asarray(thresholds, dtype=np.float64).ravel()
    order = np.argsort(s, kind="stable")
    ss = s[order]
    pos_below = np.concatenate([[0], np.cumsum(y[order])])  # positives among the k lowest scores
    below = np.searchsorted(ss, t, side="left")  # scores strictly below t
    n_pos = int(y.sum())
    fn = pos_below[below]
    tp = n_pos - fn
    fp = (len(s) - below) - tp
    return PrCurve.from_counts(t, tp, fp, fn)


def _pr_pairs(curve) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(curve, PrCurve):
        return curve.recall, curve.precision
    arr = np.asarray(list(curve), dtype=np.float64).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def auc(curve) -> float:
    """Trapezoidal area under precision over recall.

    Accepts a :class:`PrCurve` or ``(recall, precision)`` pairs. Duplicate
    recall values keep their highest precision.
    """
    r, p = _pr_pairs(curve)
    if len(r) == 0:
        raise DegenerateCurve("empty curve")
    ur = np.unique(r)
    if len(ur) < 2:
        raise DegenerateCurve("curve has a single recall value")
    best = np.full(len(ur), -np.inf)
    np.maximum.at(best, np.searchsorted(ur, r), p)
    return float(np.sum(np.diff(ur) * (best[1:] + best[:-1]) / 2.0))


def f1_score(precision: float, recall: float) -> float:
    s = precision + recall
    return 0.0 if s == 0 else 2.0 * precision * recall / s


def f1_at(curve: PrCurve, threshold: float) -> float:
    hit = np.nonzero(curve.thresholds == threshold)[0]
    if len(hit) == 0:
        raise ThresholdNotFound(f"threshold {threshold} not in curve")
    i = hit[0]
    return f1_score(float(curve.precision[i]), float(curve.recall[i]))


def best_f1(curve: PrCurve) -> tuple[float, float]:
    """(threshold, F1) maximising F1; the lowest such threshold on ties."""
    f = curve.f1
    i = int(np.argmax(f))
    return float(curve.thresholds[i]), float(f[i])


def wilson_interval(successes: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return (0.0, 1.0)
    p = successes / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return (max(0.0, centre - half), min(1.0, centre + half))


# ---------------------------------------------------------------- harvest report


@dataclass
class ScenarioStats:
    peppers: int = 0
    attempts: int = 0
    detection: float = 0.0
    peduncle: float = 0.0
    attachment: float = 0.0
    attachment_conditional: float = 0.0
    harvest: float = 0.0
    avg_attempts: float = 0.0
    failures: dict = field(default_factory=lambda: {k: 0 for k in CATEGORY_KEYS})
    timing: dict = field(default_factory=dict)

    def rates(self) -> list[float]:
        return [self.detection, self.peduncle, self.attachment, self.harvest]


@dataclass
class HarvestReport:
    scenarios: dict
    overall: ScenarioStats

    def to_json(self) -> dict:
        return {
            "overall": asdict(self.overall),
            "scenarios": {k: asdict(v) for k, v in self.scenarios.items()},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _get(r, name):
    return r[name] if isinstance(r, dict) else getattr(r, name)


def _mean_std(values) -> tuple[float, float]:
    if not values:
        return (0.0, 0.0)
    a = np.asarray(values, dtype=np.float64)
    return (float(a.mean()), float(a.std()))


def _pct(k: int, n: int) -> float:
    return 100.0 * k / n if n else 0.0


def _cycle_time(attempts) -> float:
    """One successful harvest cycle: the harvesting attempt plus the perception
    stages timed on the first attempt (retries skip re-perception)."""
    ordered = sorted(attempts, key=lambda r: _get(r, "attempt_index"))
    cycle = dict(_get(ordered[0], "durations"))
    cycle.update(_get(next(r for r in ordered if _get(r, "harvested")), "durations"))
    return float(sum(cycle.values()))


def scenario_stats(records) -> ScenarioStats:
    peppers: dict = defaultdict(list)
    for r in records:
        peppers[(_get(r, "scene"), _get(r, "pepper_id"))].append(r)
    n = len(peppers)
    st = ScenarioStats(peppers=n, attempts=len(records))
    if n == 0:
        return st

    def any_of(flag):
        return sum(1 for rs in peppers.values() if any(_get(r, flag) for r in rs))

    det, ped, att, harv = (any_of(f) for f in ("pepper_detected", "peduncle_detected", "attached", "harvested"))
    st.detection, st.peduncle, st.attachment, st.harvest = (_pct(k, n) for k in (det, ped, att, harv))
    st.attachment_conditional = _pct(att, ped)
    detected = [rs for rs in peppers.values() if any(_get(r, "pepper_detected") for r in rs)]
    st.avg_attempts = float(np.mean([len(rs) for rs in detected])) if detected else 0.0
    cats = Counter(_get(r, "failure_category") for r in records)
    st.failures = {k: int(cats.get(k, 0)) for k in CATEGORY_KEYS}
    per_stage = {k: [] for k in STAGES}
    for r in records:
        for k, v in _get(r, "durations").items():
            per_stage[k].append(v)
    st.timing = {k: _mean_std(v) for k, v in per_stage.items()}
    st.timing["total"] = _mean_std([_cycle_time(rs) for rs in peppers.values() if any(_get(r, "harvested") for r in rs)])
    return st


def harvest_report(records) -> HarvestReport:
    """Per-pepper aggregation: a pepper counts for a stage if any attempt reached it."""
    records = list(records)
    groups: dict = defaultdict(list)
    for r in records:
        groups["modified" if _get(r, "modified") else "unmodified"].append(r)
    return HarvestReport(
        {k: scenario_stats(groups[k]) for k in ("unmodified", "modified") if k in groups},
        scenario_stats(records),
    )


def success_table(report: HarvestReport, reference: bool = True) -> str:
    """Aligned text table: one row per stage, one column per scenario."""
    cols = list(report.scenarios) or ["overall"]
    stats = [report.scenarios.get(c, report.overall) for c in cols]
    header = ["", *cols]
    if reference:
        header += [f"ref {c}" for c in cols if c in REFERENCE_SUCCESS]
    rows = [
        ("Pepper Detection", "detection"),
        ("Peduncle Detection", "peduncle"),
        ("Attachment Success", "attachment"),
        ("Overall Harvest Success", "harvest"),
    ]
    body = [["Peppers", *[str(s.peppers) for s in stats]], ["Avg Attempts (total)", *[f"{s.avg_attempts:.1f}" for s in stats]]]
    if reference:
        body[0] += ["" for c in cols if c in REFERENCE_SUCCESS]
        body[1] += [f"{REFERENCE_SUCCESS[c]['avg_attempts']:.1f}" for c in cols if c in REFERENCE_SUCCESS]
    for label, key in rows:
        line = [label, *[f"{getattr(s, key):.1f}%" for s in stats]]
        if reference:
            line += [f"{REFERENCE_SUCCESS[c][key]:.1f}%" for c in cols if c in REFERENCE_SUCCESS]
        body.append(line)
    return _align([header, *body])


def timing_table(report: HarvestReport, reference: bool = True) -> str:
    st = report.overall
    header = ["Stage", "Time (s)"] + (["ref (s)"] if reference else [])
    body = []
    for k in (*STAGES, "total"):
        m, s = st.timing.get(k, (0.0, 0.0))
        line = [STAGE_LABELS.get(k, "Total"), f"{m:.1f} (+/- {s:.1f})"]
        if reference:
            rm, rs = REFERENCE_TIMING[k]
            line.append(f"{rm:.1f} (+/- {rs:.1f})")
        body.append(line)
    return _align([header, *body])


def failure_csv(stats: ScenarioStats) -> str:
    lines = ["category,count"] + [f"{k},{stats.failures.get(k, 0)}" for k in CATEGORY_KEYS]
    return "\n".join(lines) + "\n"


def _align(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for r in rows:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out) + "\n"
