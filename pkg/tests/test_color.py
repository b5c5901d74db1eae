import colorsys
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pepperharvest.color import (
    GaussianColorModel,
    fit_gaussian,
    log_likelihood,
    rgb_to_rotated_hsv,
    segment_image,
    wrap_hue,
)
from pepperharvest.errors import TooFewPixels

TABLE_MODEL = GaussianColorModel([180.0, 1.0, 0.39], [255.0, 0.13, 0.017])


def test_rotated_hsv_examples():
    np.testing.assert_allclose(rgb_to_rotated_hsv([255, 0, 0]), [90, 1, 1])
    np.testing.assert_allclose(rgb_to_rotated_hsv([0, 255, 0]), [210, 1, 1])
    np.testing.assert_allclose(rgb_to_rotated_hsv([128, 128, 128]), [90, 0, 128 / 255])


@settings(max_examples=200, deadline=None)
@given(st.tuples(*[st.integers(0, 255)] * 3))
def test_rotated_hsv_matches_colorsys(rgb):
    h, s, v = colorsys.rgb_to_hsv(*(c / 255 for c in rgb))
    got = rgb_to_rotated_hsv(np.array(rgb))
    if s > 0:
        assert abs(wrap_hue(got[0] - (h * 360 + 90) % 360)) < 1e-9
    assert got[1] == pytest.approx(s, abs=1e-12)
    assert got[2] == pytest.approx(v, abs=1e-12)


def test_fit_gaussian_hand_arithmetic():
    m = fit_gaussian([[80, 0.4, 0.5], [100, 0.6, 0.7]])
    np.testing.assert_allclose(m.mu, [90, 0.5, 0.6])
    np.testing.assert_allclose(m.sigma, [100, 0.01, 0.01])


def test_fit_gaussian_variance_floor():
    m = fit_gaussian(np.tile([30.0, 0.2, 0.3], (5, 1)))
    np.testing.assert_allclose(m.sigma, [1e-6] * 3)


def test_fit_gaussian_circular_mean():
    m = fit_gaussian([[260, 0.5, 0.5], [280, 0.5, 0.5]])
    assert m.mu[0] == pytest.approx(270.0)
    # across the wrap the circular mean is 0, not 180
    m = fit_gaussian([[350, 0.5, 0.5], [10, 0.5, 0.5]])
    assert abs(wrap_hue(m.mu[0])) < 1e-9
    assert m.sigma[0] == pytest.approx(100.0)


def test_fit_gaussian_needs_two_pixels():
    with pytest.raises(TooFewPixels):
        fit_gaussian([[1, 0.5, 0.5]])


def test_log_likelihood_at_table_mean():
    # independent evaluation at 40 significant digits
    from decimal import Decimal, getcontext

    getcontext().prec = 40
    two_pi = Decimal(2) * Decimal("3.141592653589793238462643383279502884197")
    det = Decimal(255) * Decimal("0.13") * Decimal("0.017")
    expected = -(two_pi.ln() / 2) - det.ln() / 2
    got = log_likelihood(TABLE_MODEL, [180.0, 1.0, 0.39])
    assert got == pytest.approx(float(expected), abs=1e-12)
    assert got == pytest.approx(-0.6322, abs=1e-4)


def test_unit_mahalanobis_step():
    base = log_likelihood(TABLE_MODEL, [180.0, 1.0, 0.39])
    stepped = log_likelihood(TABLE_MODEL, [180.0 + math.sqrt(255.0), 1.0, 0.39])
    assert base - stepped == pytest.approx(0.5, abs=1e-9)
    assert stepped == pytest.approx(-1.1322, abs=1e-4)


def test_equal_mahalanobis_equal_score():
    a = log_likelihood(TABLE_MODEL, [180 + 3 * math.sqrt(255), 1.0, 0.39])
    b = log_likelihood(TABLE_MODEL, [180.0, 1.0 - 3 * math.sqrt(0.13), 0.39])
    assert a == pytest.approx(b, abs=1e-12)


def test_hue_wraps():
    m = GaussianColorModel([5.0, 0.5, 0.5], [100.0, 0.1, 0.1])
    assert log_likelihood(m, [355.0, 0.5, 0.5]) == pytest.approx(log_likelihood(m, [15.0, 0.5, 0.5]))
    assert float(wrap_hue(180.0)) == 180.0
    assert float(wrap_hue(-180.0)) == 180.0


def test_model_rejects_nonpositive_variance():
    with pytest.raises(ValueError):
        GaussianColorModel([0, 0, 0], [1, 0, 1])


def test_model_json_round_trip(tmp_path):
    TABLE_MODEL.save(tmp_path / "m.json")
    back = GaussianColorModel.load(tmp_path / "m.json")
    np.testing.assert_array_equal(back.mu, TABLE_MODEL.mu)
    np.testing.assert_array_equal(back.sigma, TABLE_MODEL.sigma)


def test_segment_uniform_and_infinite_threshold():
    m = GaussianColorModel([90.0, 1.0, 1.0], [50.0, 0.01, 0.02])
    img = np.zeros((4, 5, 3), dtype=np.uint8)
    img[..., 0] = 255  # pure red = rotated (90, 1, 1), exactly the mean
    mask, scores = segment_image(m, img, -1.0)
    assert mask.all()
    np.testing.assert_allclose(scores, m.precomputed_constant)
    assert not segment_image(m, img, math.inf)[0].any()


def test_segment_mask_monotone_in_threshold(rng):
    m = GaussianColorModel([90.0, 0.85, 0.6], [50.0, 0.01, 0.02])
    for _ in range(20):
        img = rng.integers(0, 256, (24, 32, 3)).astype(np.uint8)
        prev = None
        for t in np.linspace(-60, 5, 14):
            mask, _ = segment_image(m, img, t)
            if prev is not None:
                assert not np.any(mask & ~prev)
            prev = mask


def test_variance_is_population_form():
    x = [[10, 0.1, 0.2], [20, 0.3, 0.2], [60, 0.5, 0.9]]
    m = fit_gaussian(x)
    v = [float(sum((Fraction(r[1]) - Fraction(sum(Fraction(q[1]) for q in x), 3)) ** 2 for r in x) / 3)]
    assert m.sigma[1] == pytest.approx(v[0], rel=1e-12)
