import numpy as np
import pytest

from conftest import frame_from_normalized
from rawburst.align import MotionField, align_burst, make_grid
from rawburst.burst_io import NoiseParams, RawBurst, normalized_mosaic
from rawburst.kernels import available_backends
from rawburst.merge import (
    MergeConfig,
    _field_to_grid,
    _frequency_norms,
    _overlap_add,
    merge_burst,
    raised_cosine_window,
    spatial_denoise_spectrum,
    temporal_merge_stack,
    tile_noise_variance,
    tile_rms,
)
from rawburst.pyramid import bayer_to_gray, build_pyramid
from rawburst.synthbench import SynthSpec, synthesize_burst, psnr


def aligned_noisy_burst(seed=0, frames=4, width=256, height=192, noise=None):
    spec = SynthSpec(width=width, height=height, frames=frames, seed=seed,
                     noise=noise or NoiseParams(4e-4, 1.6e-5))
    burst, clean = synthesize_burst(spec)
    grays = [bayer_to_gray(f, burst.meta) for f in burst.frames]
    fields = align_burst([build_pyramid(g) for g in grays])
    return burst, clean, fields


class TestTileStats:
    def test_rms_of_constant(self):
        assert tile_rms(np.full((4, 4), 0.3)) == pytest.approx(0.3)

    def test_rms_small_example(self):
        assert tile_rms(np.array([[0.0, 0.0], [2.0, 2.0]])) == pytest.approx(np.sqrt(2))

    def test_contrast_raises_rms_at_equal_mean(self):
        flat = np.array([[1.0, 1.0], [1.0, 1.0]])
        contrasty = np.array([[0.0, 2.0], [0.0, 2.0]])
        assert flat.mean() == contrasty.mean()
        assert tile_rms(flat) == pytest.approx(1.0)
        assert tile_rms(contrasty) == pytest.approx(np.sqrt(2))
        assert tile_rms(contrasty) > tile_rms(flat)

    def test_noise_variance_read_only(self):
        tile = np.random.default_rng(0).uniform(0, 1, (8, 8))
        assert tile_noise_variance(tile, NoiseParams(0.0, 4e-6)) == pytest.approx(4e-6)

    def test_noise_variance_shot_only(self):
        assert tile_noise_variance(np.full((8, 8), 0.5), NoiseParams(1e-4, 0.0)) == (
            pytest.approx(5e-5)
        )

    def test_noise_variance_zero_tile(self):
        assert tile_noise_variance(np.zeros((8, 8)), NoiseParams(1e-4, 1e-6)) == (
            pytest.approx(1e-6)
        )


class TestTemporalMerge:
    def test_identical_tiles_return_reference_spectrum(self):
        tile = np.random.default_rng(1).uniform(0, 1, (16, 16))
        stack = np.stack([tile] * 5)
        merged = temporal_merge_stack(stack, 2e-4, MergeConfig())
        np.testing.assert_allclose(merged, np.fft.fft2(tile), atol=1e-12)

    def test_tau_zero_sticks_to_reference(self):
        rng = np.random.default_rng(2)
        stack = rng.uniform(0, 1, (4, 16, 16))
        merged = temporal_merge_stack(stack, 2e-4, MergeConfig(temporal_strength=0.0))
        np.testing.assert_allclose(merged, np.fft.fft2(stack[0]), atol=1e-9)

    def test_tau_huge_averages_all_frames(self):
        rng = np.random.default_rng(3)
        base = rng.uniform(0.2, 0.8, (16, 16))
        stack = base + rng.normal(0, 0.02, (6, 16, 16))
        merged = temporal_merge_stack(stack, 2e-4, MergeConfig(temporal_strength=1e12))
        spatial = np.fft.ifft2(merged).real
        np.testing.assert_allclose(spatial, stack.mean(axis=0), atol=1e-6)

    def test_single_bin_half_weight_closed_form(self):
        # Craft a pair whose spectra differ in exactly one conjugate bin pair
        # with |D|^2 == c sigma^2, so the pairwise weight is exactly 1/2.
        rng = np.random.default_rng(4)
        t0 = rng.uniform(0, 1, (16, 16))
        s0 = np.fft.fft2(t0)
        cfg = MergeConfig(temporal_strength=75.0)
        sigma2 = 2e-4
        c = cfg.scale_k * cfg.temporal_strength
        d = np.sqrt(c * sigma2)  # real-valued bin difference
        s1 = s0.copy()
        s1[1, 2] -= d
        s1[-1, -2] -= d  # conjugate partner keeps the tile real
        t1 = np.fft.ifft2(s1).real
        merged = temporal_merge_stack(np.stack([t0, t1]), sigma2, cfg)
        # out = (s0 + s1 + A*(s0-s1)) / 2 with A = 1/2 -> s0 - d/4 at the bin
        assert merged[1, 2] == pytest.approx(s0[1, 2] - d / 4, rel=1e-9)
        untouched = np.ones_like(merged, dtype=bool)
        untouched[1, 2] = untouched[-1, -2] = False
        np.testing.assert_allclose(merged[untouched], s0[untouched], atol=1e-9)

    def test_weight_strictly_decreasing_in_tau(self):
        rng = np.random.default_rng(5)
        t0 = rng.uniform(0, 1, (16, 16))
        t1 = t0 + rng.normal(0, 0.05, (16, 16))
        s0, s1 = np.fft.fft2(t0), np.fft.fft2(t1)
        sigma2 = 3e-4
        weights = []
        for tau in (1.0, 10.0, 100.0):
            merged = temporal_merge_stack(np.stack([t0, t1]), sigma2,
                                          MergeConfig(temporal_strength=tau))
            a = (2.0 * merged - s0 - s1) / (s0 - s1)
            weights.append(a.real)
        assert (weights[0] > weights[1]).all()
        assert (weights[1] > weights[2]).all()

    def test_output_is_real_after_inverse(self):
        rng = np.random.default_rng(6)
        stack = rng.uniform(0, 1, (5, 16, 16))
        merged = temporal_merge_stack(stack, 1e-4, MergeConfig())
        residue = np.abs(np.fft.ifft2(merged).imag).max()
        assert residue < 1e-9


class TestSpatialDenoise:
    def _spectrum(self, seed=7):
        return np.fft.fft2(np.random.default_rng(seed).uniform(0, 1, (16, 16)))

    def test_zero_strength_is_identity(self):
        spec = self._spectrum()
        out = spatial_denoise_spectrum(spec, 2e-4, 8, MergeConfig(spatial_strength=0.0))
        np.testing.assert_array_equal(out, spec)

    def test_dc_bin_never_changes(self):
        spec = self._spectrum()
        for s in (0.1, 10.0, 1e12):
            out = spatial_denoise_spectrum(spec, 2e-4, 8, MergeConfig(spatial_strength=s))
            assert out[0, 0] == spec[0, 0]

    def test_huge_strength_crushes_non_dc(self):
        spec = self._spectrum()
        out = spatial_denoise_spectrum(spec, 2e-4, 8, MergeConfig(spatial_strength=1e12))
        ratio = np.abs(out) / np.abs(spec)
        assert (ratio.flat[1:] < 1e-6).all()

    def test_frequency_norms_are_symmetric(self):
        fn = _frequency_norms(16)
        assert fn[0, 0] == 0.0
        np.testing.assert_array_equal(fn[1:, :], fn[:0:-1, :])
        assert fn[8, 8] == pytest.approx(np.hypot(8, 8))


class TestWindow:
    @pytest.mark.parametrize("n", [8, 16, 32])
    def test_half_overlap_partition_of_unity(self, n):
        w = raised_cosine_window(n)
        grid = make_grid((10 - 1) * (n // 2), (10 - 1) * (n // 2), n)
        tiled = np.broadcast_to(w, (grid.tiles_y, grid.tiles_x, n, n))
        acc = _overlap_add(tiled, grid)
        h = grid.stride
        interior = acc[h : 10 * h, h : 10 * h]
        np.testing.assert_allclose(interior, 1.0, atol=1e-9)

    def test_edge_value_n16(self):
        w1 = 0.5 - 0.5 * np.cos(2 * np.pi * 0.5 / 16)
        assert raised_cosine_window(16)[0, 0] == pytest.approx(w1 * w1)
        assert w1 == pytest.approx(0.009607, abs=1e-6)

    def test_symmetry(self):
        w = raised_cosine_window(16)
        np.testing.assert_allclose(w, w[::-1, :], atol=0)
        np.testing.assert_allclose(w, w.T, atol=0)
        assert ((w > 0) & (w < 1)).all()


class TestMergeBurst:
    def test_identity_on_static_noiseless_burst(self, meta):
        rng = np.random.default_rng(8)
        values = rng.uniform(0.1, 0.9, (64, 96))
        frame = frame_from_normalized(values, meta)
        burst = RawBurst(frames=(frame,) * 8, meta=meta)
        grays = [bayer_to_gray(f, meta) for f in burst.frames]
        fields = align_burst([build_pyramid(g) for g in grays],
                             cfg=None)
        for tau in (0.0, 75.0, 1e12):
            merged = merge_burst(burst, fields, NoiseParams(1e-4, 1e-6),
                                 MergeConfig(temporal_strength=tau, spatial_strength=0.0))
            np.testing.assert_array_equal(merged.samples, frame.samples)

    def test_tau_zero_returns_reference_even_when_noisy(self):
        burst, _, fields = aligned_noisy_burst(seed=9)
        merged = merge_burst(burst, fields, NoiseParams(4e-4, 1.6e-5),
                             MergeConfig(temporal_strength=0.0, spatial_strength=0.0))
        np.testing.assert_array_equal(merged.samples, burst.reference.samples)

    def test_denoising_improves_psnr(self):
        burst, clean, fields = aligned_noisy_burst(seed=10, frames=8)
        merged = merge_burst(burst, fields, NoiseParams(4e-4, 1.6e-5), MergeConfig())
        meta = burst.meta
        gain = psnr(normalized_mosaic(merged, meta), clean) - psnr(
            normalized_mosaic(burst.reference, meta), clean)
        assert gain >= 3.0

    def test_wrong_field_degrades_less_than_one_db(self):
        burst, clean, fields = aligned_noisy_burst(seed=11, frames=2)
        meta = burst.meta
        bad = fields[0].vectors.copy()
        bad[:, :, 0] = 20.0
        bad[:, :, 1] = 14.0
        merged = merge_burst(burst, [MotionField(fields[0].grid, bad)],
                             NoiseParams(4e-4, 1.6e-5), MergeConfig())
        p_bad = psnr(normalized_mosaic(merged, meta), clean)
        p_ref = psnr(normalized_mosaic(burst.reference, meta), clean)
        assert p_bad >= p_ref - 1.0

    def test_thread_count_does_not_change_output(self):
        burst, _, fields = aligned_noisy_burst(seed=12)
        noise = NoiseParams(4e-4, 1.6e-5)
        a = merge_burst(burst, fields, noise, MergeConfig(), threads=1)
        b = merge_burst(burst, fields, noise, MergeConfig(), threads=4)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_backends_agree_on_merged_mosaic(self):
        backends = available_backends()
        if len(backends) < 2:
            pytest.skip("compiled extension not built")
        burst, _, fields = aligned_noisy_burst(seed=13)
        noise = NoiseParams(4e-4, 1.6e-5)
        outs = [merge_burst(burst, fields, noise, MergeConfig(), backend=mod).samples
                for mod in backends.values()]
        np.testing.assert_array_equal(outs[0], outs[1])

    def test_merge_tile_size_may_differ_from_alignment(self):
        burst, clean, fields = aligned_noisy_burst(seed=14, frames=6)
        merged = merge_burst(burst, fields, NoiseParams(4e-4, 1.6e-5),
                             MergeConfig(tile_size=32))
        meta = burst.meta
        gain = psnr(normalized_mosaic(merged, meta), clean) - psnr(
            normalized_mosaic(burst.reference, meta), clean)
        assert gain >= 2.0

    def test_field_count_mismatch_rejected(self):
        burst, _, fields = aligned_noisy_burst(seed=15)
        with pytest.raises(ValueError, match="motion fields"):
            merge_burst(burst, fields[:-1], NoiseParams(4e-4, 1.6e-5), MergeConfig())


class TestFieldResampling:
    def test_exact_when_grids_match(self):
        grid = make_grid(96, 128, 16)
        rng = np.random.default_rng(16)
        field = MotionField(grid, rng.integers(-4, 5, (grid.tiles_y, grid.tiles_x, 2)).astype(float))
        vec = _field_to_grid(field, grid)
        np.testing.assert_array_equal(
            vec.reshape(grid.tiles_y, grid.tiles_x, 2), field.vectors)

    def test_constant_field_survives_resampling(self):
        src = make_grid(96, 128, 16)
        field = MotionField(src, np.full((src.tiles_y, src.tiles_x, 2), 3.0))
        dst = make_grid(96, 128, 32)
        vec = _field_to_grid(field, dst)
        assert (vec == 3).all()
