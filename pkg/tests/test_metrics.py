import math

import numpy as np
import pytest
from support import smooth_image, ssim_reference

from tvmap.errors import ArgumentError
from tvmap.metrics import accuracy, psnr, r2_score, ssim


class TestSsim:
    def test_identical_inputs_give_exactly_one(self):
        img = np.random.default_rng(0).random((32, 32))
        assert ssim(img, img) == 1.0

    def test_anticorrelated_binary_image(self):
        rng = np.random.default_rng(1)
        img = (rng.random((64, 64)) > 0.5).astype(np.float64)
        assert ssim(img, 1.0 - img) < 0.0

    def test_matches_textbook_reference(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a = smooth_image(rng, (64, 64), roughness=6)
            b = np.clip(a + 0.1 * rng.standard_normal((64, 64)), 0, 1)
            assert abs(ssim(a, b) - ssim_reference(a, b)) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.random((24, 24))
        b = rng.random((24, 24))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_upper_bound_and_strictness(self):
        rng = np.random.default_rng(4)
        a = rng.random((20, 20))
        for scale in (1e-6, 1e-3, 1e-1):
            b = a.copy()
            b[7, 7] += scale
            value = ssim(a, b)
            assert value < 1.0
        assert ssim(a, a.copy()) == 1.0

    def test_shape_and_size_validation(self):
        with pytest.raises(ArgumentError):
            ssim(np.zeros((16, 16)), np.zeros((17, 16)))
        with pytest.raises(ArgumentError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestPsnr:
    def test_closed_forms(self):
        base = np.random.default_rng(5).random((16, 16))
        assert psnr(base, base + 0.1) == pytest.approx(20.0)
        assert psnr(base, base + 1.0) == pytest.approx(0.0)

    def test_identical_images_sentinel(self):
        img = np.random.default_rng(6).random((8, 8))
        assert psnr(img, img.copy()) == math.inf

    def test_decreases_with_noise(self):
        rng = np.random.default_rng(7)
        img = smooth_image(rng, (48, 48))
        values = []
        for sigma in (0.02, 0.05, 0.1):
            noisy = img + sigma * rng.standard_normal(img.shape)
            values.append(psnr(img, noisy))
        assert values[0] > values[1] > values[2]


class TestR2Score:
    def test_perfect_fit(self):
        assert r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0

    def test_mean_baseline(self):
        labels = [1.0, 2.0, 3.0, 4.0]
        assert r2_score(labels, [2.5] * 4) == 0.0

    def test_hand_computed_case(self):
        assert r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 4.0]) == pytest.approx(0.5)

    def test_zero_variance_labels(self):
        with pytest.raises(ArgumentError):
            r2_score([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])

    def test_length_mismatch(self):
        with pytest.raises(ArgumentError):
            r2_score([1.0, 2.0], [1.0])


class TestAccuracy:
    def test_reported_fitness_case(self):
        assert accuracy(97, 100) == 0.97

    def test_extremes(self):
        assert accuracy(0, 10) == 0.0
        assert accuracy(10, 10) == 1.0

    def test_validation(self):
        with pytest.raises(ArgumentError):
            accuracy(5, 0)
        with pytest.raises(ArgumentError):
            accuracy(11, 10)
        with pytest.raises(ArgumentError):
            accuracy(-1, 10)
