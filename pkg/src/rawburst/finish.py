"""Simplified finishing: denoised mosaic to display-ready 8-bit RGB.

Stages, in pipeline order: black/white normalization, white balance,
gradient-corrected demosaicking, color correction, synthetic-exposure tone
mapping, S-curve contrast, sRGB encoding, triple unsharp masking, 8-bit
quantization. Every stage maps [0, 1] into [0, 1]. The minimal variant keeps
only normalization, white balance, demosaic, color matrix, and gamma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .burst_io import BayerFrame, BurstMetadata, cfa_offsets

INV_TWO_PI = 1.0 / (2.0 * np.pi)


@dataclass(frozen=True)
class FinishConfig:
    synthetic_gain: float = 8.0
    contrast_alpha: float = 0.08
    sharpen_amounts: tuple[float, ...] = (1.0, 0.5, 0.5)
    sharpen_sigmas: tuple[float, ...] = (1.0, 2.0, 4.0)
    sharpen_thresholds: tuple[float, ...] = (0.02, 0.04, 0.06)

    def __post_init__(self):
        if self.synthetic_gain < 1:
            raise ValueError(f"synthetic gain must be >= 1, got {self.synthetic_gain}")
        # Soft clamp keeps the S-curve monotone.
        alpha = min(max(self.contrast_alpha, 0.0), INV_TWO_PI)
        object.__setattr__(self, "contrast_alpha", alpha)
        if not len(self.sharpen_amounts) == len(self.sharpen_sigmas) == len(self.sharpen_thresholds):
            raise ValueError("sharpen parameter triples must have equal length")


# ----------------------------------------------------------------------------
# Mosaic-domain stages
# ----------------------------------------------------------------------------

def normalize_black_white(frame: BayerFrame, meta: BurstMetadata) -> np.ndarray:
    values = (frame.samples.astype(np.float64) - meta.black_level) / meta.scale
    return np.clip(values, 0.0, 1.0)


def white_balance(mosaic: np.ndarray, wb_gains, cfa: str) -> np.ndarray:
    out = mosaic.astype(np.float64, copy=True)
    for gain, (dy, dx) in zip(wb_gains, cfa_offsets(cfa).values()):
        out[dy::2, dx::2] *= gain
    return np.clip(out, 0.0, 1.0)


def _conv5(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    padded = np.pad(img, 2, mode="reflect")
    out = np.zeros_like(img)
    h, w = img.shape
    for dy in range(5):
        for dx in range(5):
            weight = kernel[dy, dx]
            if weight != 0.0:
                out += weight * padded[dy : dy + h, dx : dx + w]
    return out


# Gradient-corrected 5x5 interpolation kernels (all sum to 1).
_K_GREEN = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0],
]) / 8.0
_K_SAME_ROW = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0],
]) / 8.0
_K_SAME_COL = _K_SAME_ROW.T
_K_OPPOSITE = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0],
]) / 8.0


def demosaic(mosaic: np.ndarray, cfa: str) -> np.ndarray:
    """Gradient-corrected linear interpolation to a full-resolution RGB image.

    Each missing color is predicted from its bilinear neighbors plus a
    Laplacian correction from the channel actually sampled at the site; the
    fixed 5x5 kernels above implement both terms in one pass.
    """
    offsets = cfa_offsets(cfa)
    h, w = mosaic.shape
    sites = {name: np.zeros((h, w), dtype=bool) for name in offsets}
    for name, (dy, dx) in offsets.items():
        sites[name][dy::2, dx::2] = True
    green_sites = sites["G1"] | sites["G2"]

    conv_green = _conv5(mosaic, _K_GREEN)
    conv_row = _conv5(mosaic, _K_SAME_ROW)
    conv_col = _conv5(mosaic, _K_SAME_COL)
    conv_opp = _conv5(mosaic, _K_OPPOSITE)

    def chroma(name: str, other: str) -> np.ndarray:
        row_y, _ = offsets[name]
        plane = np.where(sites[name], mosaic, 0.0)
        # Green sites sharing a row with this chroma vs sharing a column.
        same_row = green_sites & (np.arange(h)[:, None] % 2 == row_y)
        same_col = green_sites & ~same_row
        plane = np.where(same_row, conv_row, plane)
        plane = np.where(same_col, conv_col, plane)
        plane = np.where(sites[other], conv_opp, plane)
        return plane

    green = np.where(green_sites, mosaic, conv_green)
    rgb = np.stack([chroma("R", "B"), green, chroma("B", "R")], axis=-1)
    return np.clip(rgb, 0.0, 1.0)


# ----------------------------------------------------------------------------
# RGB-domain stages
# ----------------------------------------------------------------------------

def color_correct(img: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    out = np.einsum("ij,hwj->hwi", np.asarray(matrix, dtype=np.float64), img)
    return np.clip(out, 0.0, 1.0)


_SRGB_KNEE = 0.0031308
_SRGB_KNEE_ENC = 12.92 * _SRGB_KNEE


def srgb_encode(img: np.ndarray) -> np.ndarray:
    x = np.clip(img, 0.0, 1.0)
    # 1 + 1.055*(p - 1) == 1.055*p - 0.055 but hits 1.0 exactly at x = 1.
    nonlinear = 1.0 + 1.055 * (np.power(x, 1.0 / 2.4) - 1.0)
    return np.clip(np.where(x <= _SRGB_KNEE, 12.92 * x, nonlinear), 0.0, 1.0)


def srgb_decode(img: np.ndarray) -> np.ndarray:
    x = np.clip(img, 0.0, 1.0)
    nonlinear = np.power((x + 0.055) / 1.055, 2.4)
    return np.clip(np.where(x <= _SRGB_KNEE_ENC, x / 12.92, nonlinear), 0.0, 1.0)


def _pyr_kernel() -> np.ndarray:
    return np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _blur_sep(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    radius = len(kernel) // 2
    out = img
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="reflect")
        acc = np.zeros_like(img, dtype=np.float64)
        n = img.shape[axis]
        for k, wgt in enumerate(kernel):
            if axis == 0:
                acc += wgt * padded[k : k + n, :]
            else:
                acc += wgt * padded[:, k : k + n]
        out = acc
    return out


def _pyr_down(img: np.ndarray) -> np.ndarray:
    return _blur_sep(img, _pyr_kernel())[::2, ::2]


def _pyr_up(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    out = np.zeros(shape, dtype=np.float64)
    out[::2, ::2] = img
    return _blur_sep(out, 2.0 * _pyr_kernel())


def _fusion_depth(shape: tuple[int, int]) -> int:
    return max(0, int(np.floor(np.log2(min(shape)))) - 1)


def _exposure_fusion_gray(images: list[np.ndarray], weight_sigma: float = 0.2) -> np.ndarray:
    """Multi-scale blend of grayscale exposures using only well-exposedness
    weights (a Gaussian of pixel value about 0.5): Laplacian pyramids of the
    images, Gaussian pyramids of the normalized weights."""
    weights = [np.exp(-0.5 * ((im - 0.5) / weight_sigma) ** 2) for im in images]
    total = np.add.reduce(weights) + 1e-12
    weights = [w / total for w in weights]

    depth = _fusion_depth(images[0].shape)
    fused_levels = None
    shapes = []
    for im, wgt in zip(images, weights):
        gauss_im = [im]
        gauss_w = [wgt]
        for _ in range(depth):
            gauss_im.append(_pyr_down(gauss_im[-1]))
            gauss_w.append(_pyr_down(gauss_w[-1]))
        laplacian = [
            gauss_im[l] - _pyr_up(gauss_im[l + 1], gauss_im[l].shape) for l in range(depth)
        ]
        laplacian.append(gauss_im[depth])
        contrib = [gauss_w[l] * laplacian[l] for l in range(depth + 1)]
        if fused_levels is None:
            fused_levels = contrib
            shapes = [g.shape for g in gauss_im]
        else:
            fused_levels = [a + b for a, b in zip(fused_levels, contrib)]

    fused = fused_levels[depth]
    for l in range(depth - 1, -1, -1):
        fused = fused_levels[l] + _pyr_up(fused, shapes[l])
    return np.clip(fused, 0.0, 1.0)


def tone_map(img: np.ndarray, gain: float) -> np.ndarray:
    """Brighten shadows while keeping chroma ratios: fuse a short and a
    gain-boosted synthetic exposure of the grayscale image in gamma space,
    then rescale each channel by the fused/original luminance ratio."""
    gray = img.mean(axis=2)
    short = srgb_encode(gray)
    long = srgb_encode(np.minimum(gain * gray, 1.0))
    fused = _exposure_fusion_gray([short, long])
    fused_linear = srgb_decode(fused)
    # Pure-black pixels carry no chroma to rescale; leave them untouched.
    safe = np.maximum(gray, 1e-12)
    scale = np.where(gray >= 1e-6, fused_linear / safe, 1.0)
    return np.clip(img * scale[:, :, None], 0.0, 1.0)


def s_curve_contrast(img: np.ndarray, alpha: float) -> np.ndarray:
    return np.clip(img - alpha * np.sin(2.0 * np.pi * img), 0.0, 1.0)


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return _blur_sep(img, kernel / kernel.sum())


def sharpen(img: np.ndarray, cfg: FinishConfig) -> np.ndarray:
    """Average of unsharp-masked variants; each adds its high-pass residual
    only where the residual magnitude exceeds the variant's threshold."""
    variants = []
    for amount, sigma, threshold in zip(
        cfg.sharpen_amounts, cfg.sharpen_sigmas, cfg.sharpen_thresholds
    ):
        sharpened = np.empty_like(img)
        for ch in range(img.shape[2]):
            residual = img[:, :, ch] - _gaussian_blur(img[:, :, ch], sigma)
            boosted = img[:, :, ch] + amount * residual
            sharpened[:, :, ch] = np.where(np.abs(residual) > threshold, boosted, img[:, :, ch])
        variants.append(sharpened)
    return np.clip(np.mean(variants, axis=0), 0.0, 1.0)


def quantize8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(255.0 * img + 0.5), 0, 255).astype(np.uint8)


def finish_pipeline(frame: BayerFrame, meta: BurstMetadata,
                    cfg: FinishConfig | None = None, minimal: bool = False) -> np.ndarray:
    """Full mosaic-to-RGB composition; `minimal` keeps only the linear stages
    plus gamma, for like-for-like comparisons of differently merged mosaics."""
    if cfg is None:
        cfg = FinishConfig()
    mosaic = normalize_black_white(frame, meta)
    mosaic = white_balance(mosaic, meta.wb_gains, frame.cfa)
    rgb = demosaic(mosaic, frame.cfa)
    rgb = color_correct(rgb, meta.color_matrix_array())
    if not minimal:
        rgb = tone_map(rgb, cfg.synthetic_gain)
        rgb = s_curve_contrast(rgb, cfg.contrast_alpha)
    rgb = srgb_encode(rgb)
    if not minimal:
        rgb = sharpen(rgb, cfg)
    return quantize8(rgb)
