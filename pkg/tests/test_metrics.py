import json
import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from thawgan.metrics import LUMA_WEIGHTS, MetricReport, evaluate_pairs, psnr, ssim


def test_psnr_known_value():
    a = np.full((16, 16, 3), 0.2)
    b = np.full((16, 16, 3), 0.3)
    # mse = 0.01 exactly -> 20 dB
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)


def test_psnr_identical_is_infinite():
    a = np.random.default_rng(0).uniform(size=(8, 8, 3))
    assert psnr(a, a) == math.inf


def test_psnr_respects_max_value():
    a = np.full((8, 8), 100.0)
    b = np.full((8, 8), 110.0)
    want = 10 * math.log10(255.0**2 / 100.0)
    assert psnr(a, b, max_value=255.0) == pytest.approx(want, abs=1e-9)


def test_psnr_uses_all_channels():
    rng = np.random.default_rng(1)
    a = rng.uniform(size=(12, 12, 3))
    b = a.copy()
    b[:, :, 2] += 0.1  # damage one channel only
    mse = np.mean((a - b) ** 2)
    assert psnr(a, b) == pytest.approx(10 * math.log10(1.0 / mse))


def test_ssim_identity_is_exactly_one():
    rng = np.random.default_rng(2)
    for shape in [(16, 16), (20, 24, 3)]:
        a = rng.uniform(size=shape)
        assert ssim(a, a) == 1.0  # exact, not approximately


def test_ssim_matches_skimage_gaussian_reference():
    rng = np.random.default_rng(3)
    for trial in range(8):
        a = rng.uniform(size=(24, 24))
        b = np.clip(a + rng.normal(0, 0.1, size=(24, 24)), 0, 1)
        want = structural_similarity(
            a,
            b,
            data_range=1.0,
            gaussian_weights=True,
            sigma=1.5,
            use_sample_covariance=False,
        )
        assert ssim(a, b) == pytest.approx(want, abs=1e-7)


def test_ssim_color_goes_through_luma():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(20, 20, 3))
    b = np.clip(a + rng.normal(0, 0.05, size=a.shape), 0, 1)
    r, g, bl = LUMA_WEIGHTS
    luma_a = r * a[:, :, 0] + g * a[:, :, 1] + bl * a[:, :, 2]
    luma_b = r * b[:, :, 0] + g * b[:, :, 1] + bl * b[:, :, 2]
    assert ssim(a, b) == pytest.approx(ssim(luma_a, luma_b), abs=1e-12)


def test_ssim_orders_degradations():
    rng = np.random.default_rng(5)
    a = rng.uniform(size=(32, 32))
    slight = np.clip(a + rng.normal(0, 0.02, a.shape), 0, 1)
    heavy = np.clip(a + rng.normal(0, 0.3, a.shape), 0, 1)
    assert ssim(a, slight) > ssim(a, heavy)


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        psnr(np.zeros((8, 8)), np.zeros((8, 9)))
    with pytest.raises(ValueError):
        ssim(np.zeros((16, 16)), np.zeros((16, 17)))


def test_image_smaller_than_window_rejected():
    with pytest.raises(ValueError):
        ssim(np.zeros((10, 16)), np.zeros((10, 16)))


def test_bad_channel_count_rejected():
    with pytest.raises(ValueError):
        psnr(np.zeros((8, 8, 4)), np.zeros((8, 8, 4)))


def test_evaluate_pairs_averages():
    rng = np.random.default_rng(6)
    pairs = []
    for _ in range(3):
        a = rng.uniform(size=(16, 16, 3))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        pairs.append((a, b))
    report = evaluate_pairs(pairs)
    assert report.count == 3
    assert report.psnr == pytest.approx(np.mean([psnr(a, b) for a, b in pairs]))
    assert report.ssim == pytest.approx(np.mean([ssim(a, b) for a, b in pairs]))


def test_evaluate_pairs_propagates_infinity():
    a = np.random.default_rng(7).uniform(size=(16, 16))
    report = evaluate_pairs([(a, a)])
    assert math.isinf(report.psnr)
    assert report.ssim == 1.0
    decoded = json.loads(report.to_json())
    assert decoded["psnr"] == "inf"


def test_evaluate_pairs_empty_rejected():
    with pytest.raises(ValueError):
        evaluate_pairs([])


def test_metric_report_round_trip():
    report = MetricReport(psnr=30.5, ssim=0.9, count=4)
    assert json.loads(report.to_json()) == {"psnr": 30.5, "ssim": 0.9, "count": 4}
