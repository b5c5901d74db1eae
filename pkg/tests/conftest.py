"""Shared fixtures and the acceptance-criteria summary."""
from __future__ import annotations

import numpy as np
import pytest

from pepperharvest.geometry import ColorPointCloud

_ACCEPTANCE: dict[int, list[tuple[str, str]]] = {}


def cloud(points, colors=None, pixels=None) -> ColorPointCloud:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if colors is None:
        colors = np.zeros((len(pts), 3), dtype=np.uint8)
    return ColorPointCloud(pts, colors, pixels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None and (rep.when == "call" or rep.outcome != "passed"):
        _ACCEPTANCE.setdefault(m.args[0], []).append((item.nodeid, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        results = _ACCEPTANCE[crit]
        ok = all(outcome == "passed" for _, outcome in results)
        tr.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'} ({len(results)} check(s))")
