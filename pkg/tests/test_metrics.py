import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_pr_counts, trapezoid_auc, two_pepper_records
from pepperharvest.errors import DegenerateCurve, LengthMismatch, ThresholdNotFound
from pepperharvest.metrics import (
    PrCurve,
    auc,
    best_f1,
    f1_at,
    f1_score,
    failure_csv,
    harvest_report,
    precision_recall,
    success_table,
    timing_table,
    wilson_interval,
)
from pepperharvest.sim.harvest import AttemptRecord


def test_pr_examples():
    c = precision_recall([1.0] * 4, [1] * 4, [0.5])
    assert (c.precision[0], c.recall[0]) == (1.0, 1.0)
    c = PrCurve.from_counts([0.5], [3], [1], [1])
    assert (c.precision[0], c.recall[0]) == (0.75, 0.75)
    # no predictions at all: precision 1 by convention
    c = precision_recall([0.1, 0.2], [1, 0], [0.9])
    assert (c.precision[0], c.recall[0]) == (1.0, 0.0)


def test_pr_length_mismatch():
    with pytest.raises(LengthMismatch):
        precision_recall([0.1, 0.2], [1], [0.5])


def test_pr_matches_brute_force(rng):
    s = rng.random(1000)
    y = rng.random(1000) < 0.3
    s[:50] = 0.5  # ties exactly at a threshold
    t = np.concatenate([[0.5], rng.random(40), [0.0, 1.0]])
    c = precision_recall(s, y, t)
    assert list(zip(c.tp.tolist(), c.fp.tolist(), c.fn.tolist())) == brute_pr_counts(s, y, t)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=60))
def test_pr_invariants(pairs):
    s, y = zip(*pairs)
    c = precision_recall(s, y, np.linspace(0, 1, 21))
    assert np.all(np.diff(c.recall) <= 0)
    assert len(set((c.tp + c.fn).tolist())) == 1
    assert np.all((c.precision >= 0) & (c.precision <= 1) & (c.recall >= 0) & (c.recall <= 1))


def test_auc_examples():
    assert auc([(0, 1), (1, 1)]) == 1.0
    assert auc([(0, 1), (1, 0)]) == 0.5
    assert auc([(0, 1), (1, 0), (1, 0), (0, 0.2)]) == 0.5
    with pytest.raises(DegenerateCurve):
        auc([(0.3, 1), (0.3, 0.5)])
    with pytest.raises(DegenerateCurve):
        auc([])


def test_auc_matches_trapezoid(rng):
    for _ in range(20):
        pairs = [(float(r), float(p)) for r, p in zip(rng.integers(0, 30, 80) / 29, rng.random(80))]
        assert auc(pairs) == pytest.approx(trapezoid_auc(pairs), abs=1e-9)
    c = precision_recall(rng.random(1000), rng.random(1000) < 0.4, np.linspace(0, 1, 101))
    assert auc(c) == pytest.approx(trapezoid_auc(zip(c.recall.tolist(), c.precision.tolist())), abs=1e-12)


def test_f1():
    assert f1_score(0.75, 0.75) == pytest.approx(0.75)
    assert f1_score(1.0, 0.0) == 0.0
    c = PrCurve.from_counts([0.2, 0.6], [3, 0], [1, 0], [1, 4])
    assert f1_at(c, 0.2) == pytest.approx(0.75)
    assert f1_at(c, 0.6) == 0.0
    with pytest.raises(ThresholdNotFound):
        f1_at(c, 0.4)
    assert best_f1(c) == (0.2, pytest.approx(0.75))


def test_pr_csv():
    c = PrCurve.from_counts([0.5], [3], [1], [1])
    assert c.to_csv().splitlines() == ["threshold,precision,recall", "0.5,0.75,0.75"]


def test_two_pepper_report():
    st_ = harvest_report(two_pepper_records()).overall
    assert st_.peppers == 2 and st_.attempts == 7
    assert st_.harvest == 50.0
    assert st_.avg_attempts == 3.5
    assert (st_.detection, st_.peduncle, st_.attachment) == (100.0, 100.0, 50.0)
    assert st_.failures == {"a": 0, "b": 0, "c": 0, "d": 0, "e": 0, "f": 0, "g": 0, "h": 0, "i": 6}
    # one cycle: first-attempt perception plus the successful attach/detach/place
    assert st_.timing["total"] == (pytest.approx(4 + 1 + 1 + 7 + 15 + 9), 0.0)
    assert st_.timing["attach"][0] == pytest.approx((6 + 7 + 6 * 5) / 7)


def test_report_from_json_records():
    docs = [json.loads(r.dumps()) for r in two_pepper_records()]
    assert harvest_report(docs).to_json() == harvest_report(two_pepper_records()).to_json()


def test_empty_report():
    rep = harvest_report([])
    o = rep.overall
    assert (o.peppers, o.attempts, o.detection, o.harvest, o.avg_attempts) == (0, 0, 0.0, 0.0, 0.0)
    assert set(o.failures.values()) == {0}
    assert rep.scenarios == {}


def test_report_tables():
    recs = two_pepper_records() + [AttemptRecord(5, 0, True, False, False, False, False, "h", {"detection": 4.0})]
    rep = harvest_report(recs)
    assert list(rep.scenarios) == ["unmodified", "modified"]
    assert rep.scenarios["modified"].detection == 0.0
    table = success_table(rep)
    labels = [line[:24].strip() for line in table.splitlines()[3:]]
    assert labels == ["Pepper Detection", "Peduncle Detection", "Attachment Success", "Overall Harvest Success"]
    assert "76.5%" in table and "47.0%" in table
    assert "Total" in timing_table(rep) and "36.9 (+/- 6.4)" in timing_table(rep)
    assert failure_csv(rep.scenarios["modified"]).splitlines()[8] == "h,1"


def test_stage_ordering_on_any_monotone_records(rng):
    for _ in range(200):
        recs = []
        for pid in range(int(rng.integers(1, 6))):
            for k in range(int(rng.integers(1, 4))):
                stage = int(rng.integers(0, 5))
                flags = [stage > i for i in range(4)]
                recs.append(AttemptRecord(pid, k, False, *flags, None if flags[3] else "a"))
        s = harvest_report(recs).overall
        assert s.detection >= s.peduncle >= s.attachment >= s.harvest
        assert s.attachment_conditional <= 100.0


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    assert wilson_interval(0, 0) == (0.0, 1.0)
    assert wilson_interval(10, 10)[1] == pytest.approx(1.0, abs=1e-12)
