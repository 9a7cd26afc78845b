"""Relative error, structural similarity, and batch summary statistics."""

import numpy as np
import pytest

from inctpv import (
    BatchStats,
    GaussianBlurOperator,
    NoiseModel,
    batch_stats,
    corrupt,
    generate_phantom,
    relative_error,
    ssim,
)
from inctpv.phantoms import EllipsePhantomSpec


class TestRelativeError:
    def test_identity_is_zero(self):
        x = np.random.default_rng(80).random((12, 12))
        assert relative_error(x, x) == 0.0

    def test_zero_against_ground_truth_is_one(self):
        gt = np.random.default_rng(81).random((12, 12))
        assert relative_error(np.zeros_like(gt), gt) == pytest.approx(1.0)

    def test_scale_invariance_in_ground_truth(self):
        rng = np.random.default_rng(82)
        gt = rng.random((10, 10)) + 0.1
        x = gt + 0.05 * rng.standard_normal((10, 10))
        assert relative_error(3.0 * x, 3.0 * gt) == pytest.approx(
            relative_error(x, gt))

    def test_known_value(self):
        gt = np.array([[3.0, 4.0]])
        x = np.array([[3.0, 4.0]]) + np.array([[0.0, 5.0]])
        # ||x - gt|| = 5, ||gt|| = 5
        assert relative_error(x, gt) == pytest.approx(1.0)

    def test_zero_ground_truth_rejected(self):
        with pytest.raises(ValueError):
            relative_error(np.ones((4, 4)), np.zeros((4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            relative_error(np.ones((4, 4)), np.ones((4, 5)))


class TestSsim:
    def test_identity_is_one(self):
        img = generate_phantom(EllipsePhantomSpec(side=32, seed=0))
        assert ssim(img, img) == pytest.approx(1.0)

    def test_symmetric(self):
        rng = np.random.default_rng(83)
        a = rng.random((32, 32))
        b = rng.random((32, 32))
        assert ssim(a, b) == pytest.approx(ssim(b, a))

    def test_constant_shift_scores_below_one(self):
        img = generate_phantom(EllipsePhantomSpec(side=32, seed=1))
        shifted = np.clip(img + 0.3, 0.0, 1.0)
        assert ssim(shifted, img) < 0.999

    def test_decreases_with_noise(self):
        rng = np.random.default_rng(84)
        img = generate_phantom(EllipsePhantomSpec(side=32, seed=2))
        mild = img + 0.02 * rng.standard_normal(img.shape)
        harsh = img + 0.2 * rng.standard_normal(img.shape)
        assert ssim(harsh, img) < ssim(mild, img) < 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ssim(np.ones((16, 16)), np.ones((16, 17)))


class TestBatchStats:
    def test_nine_point_quartiles(self):
        stats = batch_stats(range(1, 10))
        assert isinstance(stats, BatchStats)
        assert stats.mean == pytest.approx(5.0)
        assert stats.minimum == 1.0
        assert stats.q1 == pytest.approx(3.0)
        assert stats.median == pytest.approx(5.0)
        assert stats.q3 == pytest.approx(7.0)
        assert stats.maximum == 9.0

    def test_population_std(self):
        values = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]
        assert batch_stats(values).std == pytest.approx(2.0)

    def test_single_value(self):
        stats = batch_stats([3.5])
        assert stats.mean == stats.median == stats.minimum == stats.maximum == 3.5
        assert stats.std == 0.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            batch_stats([])


class TestOrderingUnderNoise:
    def test_metrics_degrade_as_corruption_grows(self):
        K = GaussianBlurOperator(32)
        res = {}
        for nu in (0.0, 0.05, 0.2):
            re_vals, ssim_vals = [], []
            for seed in range(6):
                gt = generate_phantom(EllipsePhantomSpec(side=32, seed=seed))
                y = corrupt(gt, K, NoiseModel(nu=nu, seed=100 + seed))
                re_vals.append(relative_error(y, gt))
                ssim_vals.append(ssim(np.clip(y, 0.0, 1.0), gt))
            res[nu] = (np.mean(re_vals), np.mean(ssim_vals))
        assert res[0.0][0] < res[0.05][0] < res[0.2][0]
        assert res[0.0][1] > res[0.05][1] > res[0.2][1]
