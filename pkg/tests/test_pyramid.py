import numpy as np
import pytest

from conftest import frame_from_normalized
from rawburst.pyramid import (
    _convolve_axis,
    _gaussian_kernel,
    bayer_to_gray,
    build_pyramid,
    gaussian_downsample,
)


class TestBayerToGray:
    def test_constant_mosaic(self, meta):
        frame = frame_from_normalized(np.full((16, 16), 0.3), meta)
        gray = bayer_to_gray(frame, meta)
        assert gray.shape == (8, 8)
        np.testing.assert_allclose(gray, 0.3, atol=1e-4)

    def test_single_cell_mean(self, meta):
        cell = np.array([[0.1, 0.2], [0.3, 0.4]])
        frame = frame_from_normalized(cell, meta)
        gray = bayer_to_gray(frame, meta)
        assert gray.shape == (1, 1)
        assert gray[0, 0] == pytest.approx(0.25, abs=1e-4)

    def test_shape_4x4(self, meta):
        frame = frame_from_normalized(np.random.default_rng(0).uniform(0, 1, (4, 4)), meta)
        assert bayer_to_gray(frame, meta).shape == (2, 2)

    def test_commutes_with_constant_offset(self, meta):
        rng = np.random.default_rng(1)
        base = rng.uniform(0.1, 0.5, (16, 16))
        offset = 0.25
        g0 = bayer_to_gray(frame_from_normalized(base, meta), meta)
        g1 = bayer_to_gray(frame_from_normalized(base + offset, meta), meta)
        np.testing.assert_allclose(g1, g0 + offset, atol=1e-4)


class TestGaussianDownsample:
    def test_constant_preserved(self):
        for factor in (2, 4):
            out = gaussian_downsample(np.full((32, 32), 0.7), factor)
            assert out.shape == (32 // factor, 32 // factor)
            np.testing.assert_allclose(out, 0.7, atol=1e-12)

    def test_kernel_is_normalized(self):
        for factor in (2, 4):
            assert _gaussian_kernel(factor).sum() == pytest.approx(1.0, abs=1e-12)

    def test_blur_preserves_impulse_mass(self):
        img = np.zeros((33, 33))
        img[16, 16] = 1.0
        kernel = _gaussian_kernel(4)
        blurred = _convolve_axis(_convolve_axis(img, kernel, 0), kernel, 1)
        assert blurred.sum() == pytest.approx(1.0, abs=1e-6)

    def test_shapes(self):
        assert gaussian_downsample(np.zeros((64, 64)), 4).shape == (16, 16)
        assert gaussian_downsample(np.zeros((65, 63)), 4).shape == (17, 16)
        assert gaussian_downsample(np.zeros((10, 10)), 2).shape == (5, 5)


class TestBuildPyramid:
    def test_default_level_shapes(self):
        img = np.random.default_rng(2).uniform(0, 1, (1536, 2048))
        pyr = build_pyramid(img)
        shapes = [level.shape for level in pyr.levels]
        assert shapes == [(48, 64), (192, 256), (768, 1024), (1536, 2048)]
        assert pyr.levels[-1] is img or np.array_equal(pyr.levels[-1], img)

    def test_identity_factor(self):
        img = np.random.default_rng(3).uniform(0, 1, (8, 8))
        pyr = build_pyramid(img, factors=[1])
        assert len(pyr) == 2
        np.testing.assert_array_equal(pyr.levels[0], pyr.levels[1])

    def test_too_small_errors(self):
        with pytest.raises(ValueError, match="too small"):
            build_pyramid(np.zeros((16, 16)), factors=[2, 4, 4])

    def test_step_factor_orientation(self):
        img = np.random.default_rng(4).uniform(0, 1, (128, 128))
        pyr = build_pyramid(img, factors=[2, 4, 4])
        assert pyr.step_factor(0) == 4
        assert pyr.step_factor(1) == 4
        assert pyr.step_factor(2) == 2

    def test_levels_keep_mean(self):
        img = np.random.default_rng(5).uniform(0.2, 0.8, (256, 256))
        pyr = build_pyramid(img)
        target = img.mean()
        for level in pyr.levels:
            assert level.mean() == pytest.approx(target, abs=1e-3)

    def test_deterministic(self):
        img = np.random.default_rng(6).uniform(0, 1, (128, 160))
        a = build_pyramid(img)
        b = build_pyramid(img.copy())
        for la, lb in zip(a.levels, b.levels):
            np.testing.assert_array_equal(la, lb)
