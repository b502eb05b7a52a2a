import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.ndimage import gaussian_filter

from oracles import brenner_loop, laplacian_loop, vol_loop
from stagebokeh.metrics import (
    REPORT_COLUMNS, Roi, blur_map, brenner, laplacian, score_rois, to_gray, variance_of_laplacian,
)


def stripes(period=4, h=32, w=32, amplitude=1.0):
    cols = np.arange(w) % period < period // 2
    return np.tile(np.where(cols, amplitude, 0.0), (h, 1))


def test_luma_weights():
    img = np.zeros((3, 3, 3))
    img[..., 0] = 1.0
    np.testing.assert_allclose(to_gray(img), 0.299)


def test_laplacian_constant():
    assert np.all(laplacian(np.full((5, 6), 0.3)) == 0)


def test_laplacian_impulse():
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    lap = laplacian(img)
    assert lap[3, 3] == -4 * 255
    for i, j in ((2, 3), (4, 3), (3, 2), (3, 4)):
        assert lap[i, j] == 255
    mask = np.ones_like(lap, bool)
    mask[3, 3] = False
    for i, j in ((2, 3), (4, 3), (3, 2), (3, 4)):
        mask[i, j] = False
    assert np.all(lap[mask] == 0)


def test_laplacian_ramp():
    w = 16
    img = np.tile(np.arange(w) / w, (8, 1))
    lap = laplacian(img)
    np.testing.assert_allclose(lap[1:-1, 1:-1], 0, atol=1e-9)


def test_laplacian_too_small():
    with pytest.raises(ValueError):
        laplacian(np.zeros((2, 5)))


def test_laplacian_matches_loop():
    img = np.random.default_rng(0).random((9, 11))
    np.testing.assert_allclose(laplacian(img), laplacian_loop((img * 255).tolist()), rtol=1e-12, atol=1e-9)


def test_vol_constant_is_zero():
    assert variance_of_laplacian(np.full((8, 8), 0.7)) == 0


@pytest.mark.parametrize("seed", range(5))
def test_vol_matches_two_pass_loop(seed):
    img = np.random.default_rng(seed).random((12, 10, 3))
    assert variance_of_laplacian(img) == pytest.approx(vol_loop(img.tolist(), 0, 0, 10, 12), rel=1e-9)
    roi = Roi(2, 3, 5, 4)
    assert variance_of_laplacian(img, roi) == pytest.approx(vol_loop(img.tolist(), 2, 3, 5, 4), rel=1e-9)


def test_brenner_constant_and_period_two():
    assert brenner(np.full((6, 6), 0.4)) == 0
    assert brenner(stripes(period=2)) == 0


def test_brenner_period_four():
    img = stripes(period=4, h=8, w=16)
    # every shift-2 pair straddles a stripe edge
    assert brenner(img) == 8 * 14 * 255.0**2
    assert brenner(img) == pytest.approx(brenner_loop(img.tolist(), 0, 0, 16, 8), rel=1e-12)


def test_brenner_roi_narrow():
    with pytest.raises(ValueError):
        brenner(np.zeros((8, 8)), Roi(0, 0, 2, 8))


@pytest.mark.parametrize("roi", [Roi(-1, 0, 4, 4), Roi(0, 0, 9, 4), Roi(0, 0, 2, 2), Roi(5, 5, 4, 4)])
def test_invalid_roi(roi):
    with pytest.raises(ValueError):
        variance_of_laplacian(np.zeros((8, 8)), roi)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 7), elements=st.floats(0, 1)))
def test_metrics_non_negative(img):
    assert variance_of_laplacian(img) >= 0
    assert brenner(img) >= 0


def test_defocus_monotone():
    img = stripes(period=4, h=64, w=64)
    vols, brens = [], []
    for r in (0, 1, 2, 4):
        b = gaussian_filter(img, r, mode="wrap") if r else img
        vols.append(variance_of_laplacian(b, Roi(8, 8, 48, 48)))
        brens.append(brenner(b, Roi(8, 8, 48, 48)))
    assert all(a > b for a, b in zip(vols, vols[1:]))
    assert all(a > b for a, b in zip(brens, brens[1:]))


def test_whole_period_shift_invariance():
    img = stripes(period=4, h=32, w=48) * 0.6 + 0.2
    for roi, moved in ((Roi(4, 4, 20, 20), Roi(8, 4, 20, 20)), (Roi(5, 2, 17, 9), Roi(17, 2, 17, 9))):
        assert variance_of_laplacian(img, roi) == variance_of_laplacian(img, moved)
        assert brenner(img, roi) == brenner(img, moved)


def test_blur_map_cases():
    assert np.all(blur_map(np.full((5, 5), 0.2)) == 0)
    img = np.zeros((7, 7))
    img[3, 3] = 1.0
    bm = blur_map(img)
    assert bm[3, 3] == 1.0 and bm.max() == 1.0
    r = blur_map(np.random.default_rng(1).random((16, 16, 3)))
    assert r.min() == 0.0 and r.max() == 1.0


def test_score_rois_self_baseline():
    img = np.random.default_rng(2).random((16, 16, 3))
    rep = score_rois(img, {"a": Roi(0, 0, 8, 8), "b": Roi(4, 4, 10, 10)}, baseline=img)
    assert all(e.vol_ratio == 1.0 and e.brenner_ratio == 1.0 for e in rep.entries)


def test_score_rois_blurred_baseline():
    img = stripes(period=4, h=32, w=32) * 0.8 + 0.1
    blurred = gaussian_filter(img, 1.0)
    rep = score_rois(img, {"a": Roi(4, 4, 12, 12), "b": Roi(16, 10, 12, 12)}, baseline=blurred)
    assert all(e.vol_ratio > 1.0 and e.brenner_ratio > 1.0 for e in rep.entries)


def test_score_rois_without_baseline_has_no_ratios():
    rep = score_rois(np.zeros((8, 8)), {"a": Roi(0, 0, 4, 4)})
    assert rep["a"].vol_ratio is None and rep["a"].baseline_vol is None


def test_score_rois_shape_mismatch():
    with pytest.raises(ValueError):
        score_rois(np.zeros((8, 8)), {"a": Roi(0, 0, 4, 4)}, baseline=np.zeros((8, 9)))


def test_report_serialization():
    img = np.random.default_rng(3).random((16, 16))
    rep = score_rois(img, {"focus": Roi(0, 0, 8, 8)}, baseline=img * 0.5)
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == REPORT_COLUMNS
    row = dict(zip(REPORT_COLUMNS, lines[1].split(",")))
    assert float(row["vol_ratio"]) == pytest.approx(float(row["vol"]) / float(row["baseline_vol"]))
    assert json.loads(rep.to_json())["rois"][0]["roi"] == "focus"


def test_report_format_example():
    # report shape for a focused region at 95.53 VoL and 3.81x the baseline
    from stagebokeh.metrics import FocusReport, RoiScore

    rep = FocusReport([RoiScore("carrots", 95.53, 1.94e6, 95.53 / 3.81, 1.94e6 / 3.10, 3.81, 3.10)])
    row = rep.to_csv().splitlines()[1].split(",")
    assert row[0] == "carrots" and float(row[1]) == 95.53 and float(row[5]) == 3.81
