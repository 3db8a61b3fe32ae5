"""Grayscale conversion and the Gaussian pyramid used by alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .burst_io import BayerFrame, BurstMetadata, normalized_mosaic

DEFAULT_FACTORS = (2, 4, 4)


@dataclass(frozen=True)
class Pyramid:
    """Coarse-to-fine stack of grayscale images.

    levels[0] is the coarsest, levels[-1] the untouched input image.
    factors[i] is the downsampling step from levels[-(i+1)] to levels[-(i+2)],
    i.e. factors are listed fine-to-coarse, matching build order.
    """

    levels: tuple[np.ndarray, ...]
    factors: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.levels)

    def step_factor(self, level: int) -> int:
        """Downsampling factor between `level` and the next finer `level + 1`."""
        return self.factors[len(self.factors) - 1 - level]


def bayer_to_gray(frame: BayerFrame, meta: BurstMetadata) -> np.ndarray:
    """Half-resolution grayscale: mean of each 2x2 CFA cell of the
    black-subtracted, normalized mosaic."""
    m = normalized_mosaic(frame, meta)
    return 0.25 * (m[0::2, 0::2] + m[0::2, 1::2] + m[1::2, 0::2] + m[1::2, 1::2])


def _gaussian_kernel(factor: int) -> np.ndarray:
    # sigma = factor / 2 with radius 2*sigma keeps aliasing low at both
    # supported factors while staying cheap.
    sigma = factor / 2.0
    radius = int(round(2.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def _convolve_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros_like(img, dtype=np.float64)
    n = img.shape[axis]
    for k, w in enumerate(kernel):
        if axis == 0:
            out += w * padded[k : k + n, :]
        else:
            out += w * padded[:, k : k + n]
    return out


def gaussian_downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Low-pass filter then decimate; output dims are ceil(dims / factor)."""
    if factor == 1:
        return img.copy()
    if factor not in (2, 4):
        raise ValueError(f"downsampling factor must be 1, 2 or 4, got {factor}")
    kernel = _gaussian_kernel(factor)
    blurred = _convolve_axis(_convolve_axis(img, kernel, 0), kernel, 1)
    return blurred[::factor, ::factor]


def build_pyramid(img: np.ndarray, factors=DEFAULT_FACTORS) -> Pyramid:
    """Successively downsample `img` by `factors` (fine-to-coarse order).

    The finest level is the input array itself, unfiltered.
    """
    factors = tuple(int(f) for f in factors)
    if not factors:
        raise ValueError("factors must be nonempty")
    total = int(np.prod(factors))
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < total or img.shape[1] < total:
        raise ValueError(
            f"burst image too small: {img.shape[1]}x{img.shape[0]} cannot support "
            f"a pyramid with cumulative factor {total}"
        )
    levels = [img]
    for f in factors:
        levels.append(gaussian_downsample(levels[-1], f))
    return Pyramid(levels=tuple(reversed(levels)), factors=factors)
