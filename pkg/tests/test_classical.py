"""Sobel, Roberts, and Canny detectors."""

import numpy as np
import pytest

from lidar_edge.classical import (ROBERTS_1, ROBERTS_2, SOBEL_X, SOBEL_Y,
                                  canny, roberts, sobel, threshold_magnitude)
from lidar_edge.errors import DimensionError, ParameterError
from lidar_edge.rng import SplitMix64


def vertical_step(h=16, w=16, at=8, lo=0.2, hi=0.8):
    img = np.full((h, w), lo)
    img[:, at:] = hi
    return img


class TestSobel:
    def test_kernels(self):
        np.testing.assert_array_equal(
            SOBEL_X, [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]])
        np.testing.assert_array_equal(SOBEL_Y, np.asarray(SOBEL_X).T)

    def test_constant_image_zero_gradient(self):
        f = sobel(np.full((8, 8), 0.5))
        assert np.all(f.gx == 0) and np.all(f.gy == 0)

    def test_vertical_step_response(self):
        img = vertical_step()
        f = sobel(img)
        # interior columns adjacent to the step see the full kernel sum (4)
        assert f.gx[8, 7] == pytest.approx(4 * 0.6)
        assert f.gx[8, 8] == pytest.approx(4 * 0.6)
        assert np.all(f.gy[1:-1, :] == pytest.approx(0.0))

    def test_gradient_sign_convention(self):
        img = vertical_step()          # dark left, bright right
        assert sobel(img).gx[8, 8] > 0
        assert sobel(img[:, ::-1]).gx[8, 8] < 0
        assert sobel(img.T).gy[8, 8] > 0  # dark top, bright bottom

    def test_linear_ramp_exact_gradient(self):
        # f(x) = x/32 has constant df/dx; Sobel on a ramp returns 8 * slope
        img = np.tile(np.arange(32) / 32.0, (8, 1))
        f = sobel(img)
        np.testing.assert_allclose(f.gx[1:-1, 1:-1], 8.0 / 32.0, rtol=1e-12)

    def test_magnitude_is_hypot(self):
        img = SplitMix64(1).floats(64).reshape(8, 8)
        f = sobel(img)
        np.testing.assert_allclose(f.magnitude, np.hypot(f.gx, f.gy), rtol=1e-15)

    def test_too_small(self):
        with pytest.raises(DimensionError):
            sobel(np.zeros((2, 5)))


class TestRoberts:
    def test_kernels(self):
        np.testing.assert_array_equal(ROBERTS_1, [[1, 0], [0, -1]])
        np.testing.assert_array_equal(ROBERTS_2, [[0, 1], [-1, 0]])

    def test_matches_direct_differences(self):
        img = SplitMix64(2).floats(30).reshape(5, 6)
        f = roberts(img)
        for y in range(4):
            for x in range(5):
                assert f.gx[y, x] == pytest.approx(img[y, x] - img[y + 1, x + 1])
                assert f.gy[y, x] == pytest.approx(img[y, x + 1] - img[y + 1, x])

    def test_fringe_uses_zero_padding(self):
        img = np.full((3, 3), 0.4)
        f = roberts(img)
        # bottom-right corner window extends past the image; missing pixels read 0
        assert f.gx[2, 2] == pytest.approx(0.4)
        assert f.gx[1, 1] == pytest.approx(0.0)

    def test_output_shape_matches_input(self):
        assert roberts(np.zeros((4, 7))).gx.shape == (4, 7)

    def test_too_small(self):
        with pytest.raises(DimensionError):
            roberts(np.zeros((1, 4)))


class TestThresholdMagnitude:
    def test_relative_to_peak(self):
        img = vertical_step()
        out = threshold_magnitude(sobel(img), 0.5)
        assert set(np.unique(out)) <= {0.0, 1.0}
        assert np.all(out[:, 7:9] == 1.0)
        assert np.all(out[:, :6] == 0.0)

    def test_contrast_invariance(self):
        """Scaling and shifting intensities must not change the result."""
        img = SplitMix64(4).floats(256).reshape(16, 16)
        a = threshold_magnitude(sobel(img), 0.3)
        b = threshold_magnitude(sobel(0.5 * img + 0.1), 0.3)
        np.testing.assert_array_equal(a, b)

    def test_zero_field_empty(self):
        out = threshold_magnitude(sobel(np.full((5, 5), 0.7)), 0.2)
        np.testing.assert_array_equal(out, np.zeros((5, 5)))

    def test_bad_threshold(self):
        with pytest.raises(ParameterError):
            threshold_magnitude(sobel(np.zeros((3, 3))), 1.5)


class TestCanny:
    def test_clean_step_detected_and_thin(self):
        img = vertical_step(h=20, w=20, at=10)
        out = canny(img, sigma=1.0, low=0.2, high=0.4)
        assert set(np.unique(out)) <= {0.0, 1.0}
        # every interior row crosses the edge
        assert np.all(out[2:-2, 9:11].sum(axis=1) >= 1)
        # detections cluster at the step; columns far away stay empty
        assert out[:, :7].sum() == 0 and out[:, 13:].sum() == 0
        # suppression thins the response to at most the two tied center columns
        assert np.all(out[2:-2, 9:11].sum(axis=1) <= 2)

    def test_horizontal_step(self):
        img = vertical_step(h=20, w=20, at=10).T
        out = canny(img, sigma=1.0, low=0.2, high=0.4)
        assert np.all(out[9:11, 2:-2].sum(axis=0) >= 1)
        assert out[:7, :].sum() == 0 and out[13:, :].sum() == 0

    def test_contrast_invariance(self):
        img = SplitMix64(6).floats(400).reshape(20, 20)
        a = canny(img, 1.0, 0.1, 0.3)
        b = canny(0.5 * img + 0.1, 1.0, 0.1, 0.3)
        np.testing.assert_array_equal(a, b)

    def test_constant_image_empty(self):
        np.testing.assert_array_equal(canny(np.full((10, 10), 0.3)),
                                      np.zeros((10, 10)))

    def test_hysteresis_links_weak_segment(self):
        """A weak diagonal continuation survives only via a strong neighbor."""
        img = vertical_step(h=24, w=24, at=12, lo=0.1, hi=0.9)
        # fade the step's contrast in the lower half so it falls between
        # the low and high thresholds there
        img[12:, :] = vertical_step(h=12, w=24, at=12, lo=0.40, hi=0.60)
        linked = canny(img, sigma=1.0, low=0.15, high=0.55)
        # weak lower rows are present because they connect upward
        assert linked[18, 11:13].sum() >= 1
        # raising `low` above the weak response removes them
        unlinked = canny(img, sigma=1.0, low=0.50, high=0.55)
        assert unlinked[18, 11:13].sum() == 0

    def test_noise_suppression_vs_sobel(self):
        """With impulse dropouts, Canny keeps a cleaner map than raw Sobel."""
        rng = SplitMix64(8)
        img = vertical_step(h=32, w=32, at=16, lo=0.3, hi=0.8)
        for _ in range(10):
            img[rng.randint(32), rng.randint(16)] = 0.0  # dead pixels left of step
        want = np.zeros((32, 32))
        want[:, 15:17] = 1.0
        sob = threshold_magnitude(sobel(img), 0.3)
        can = canny(img, sigma=1.4, low=0.15, high=0.3)
        sob_fp = np.logical_and(sob == 1, want == 0).sum()
        can_fp = np.logical_and(can == 1, want == 0).sum()
        assert can_fp < sob_fp

    def test_invalid_thresholds(self):
        with pytest.raises(ParameterError):
            canny(np.zeros((8, 8)), 1.0, 0.5, 0.3)
        with pytest.raises(ParameterError):
            canny(np.zeros((8, 8)), -1.0, 0.1, 0.2)
