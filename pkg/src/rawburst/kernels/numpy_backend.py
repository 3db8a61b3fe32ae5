"""Pure-NumPy hot-loop kernels (fallback when the compiled core is absent).

Both backends implement the same contract:

  distance_maps(ref, alt, oy, ox, gy, gx, n, r, p) -> (T, 2r+1, 2r+1) float64
      maps[t, a, b] = sum |ref_tile_t - alt_window_t(dv=a-r, du=b-r)|^p
      where ref_tile_t starts at (oy[t], ox[t]) in `ref` and the candidate
      window starts at (oy[t] + gy[t] + dv, ox[t] + gx[t] + du) in `alt`.

  l1_candidate_distances(ref, alt, oy, ox, cy, cx, valid, n) -> (T, C) float64
      L1 distance between each ref tile and the alt tile at absolute offset
      (cy[t, c], cx[t, c]); entries with valid[t, c] == 0 come back as +inf.

  wiener_merge(spectra, sigma2, c, spatial_scale, freq_norms) -> (T, n, nh)
      Per-bin pairwise Wiener merge of half-plane tile spectra
      (T, frames, n, nh) toward the reference at frame 0, averaged over
      frames, then optionally shrunk by the frequency-shaped noise floor
      spatial_scale * freq_norms * sigma2. Zero denominators yield weight
      zero (exact-match passthrough).

Callers guarantee that every index touched is inside the padded arrays.
The L2 map is computed with the three-term expansion (tile energy, box-summed
window energy, FFT cross-correlation); the L1 map by direct evaluation.
"""

from __future__ import annotations

import numpy as np


def _gather_windows(img, start_y, start_x, size):
    ys = start_y[:, None] + np.arange(size, dtype=np.int64)[None, :]
    xs = start_x[:, None] + np.arange(size, dtype=np.int64)[None, :]
    return img[ys[:, :, None], xs[:, None, :]]


def _box_window_sums(squares, n):
    """n x n window sums of each (S, S) image in a (T, S, S) stack."""
    t, s, _ = squares.shape
    sat = np.zeros((t, s + 1, s + 1), dtype=np.float64)
    np.cumsum(squares, axis=1, out=sat[:, 1:, 1:])
    np.cumsum(sat[:, 1:, 1:], axis=2, out=sat[:, 1:, 1:])
    k = s - n + 1
    return (
        sat[:, n : n + k, n : n + k]
        - sat[:, :k, n : n + k]
        - sat[:, n : n + k, :k]
        + sat[:, :k, :k]
    )


def _l2_maps_fft(tiles, areas, n, r):
    """All-offset squared distances via energy terms plus FFT correlation."""
    size = n + 2 * r
    tile_energy = np.einsum("tij,tij->t", tiles, tiles)
    window_energy = _box_window_sums(areas * areas, n)

    length = size + n - 1
    spec_area = np.fft.rfft2(areas, s=(length, length))
    spec_tile = np.fft.rfft2(tiles[:, ::-1, ::-1], s=(length, length))
    corr = np.fft.irfft2(spec_area * spec_tile, s=(length, length))
    corr = corr[:, n - 1 : n + 2 * r, n - 1 : n + 2 * r]

    return tile_energy[:, None, None] + window_energy - 2.0 * corr


def distance_maps(ref, alt, oy, ox, gy, gx, n, r, p):
    oy = np.asarray(oy, dtype=np.int64)
    ox = np.asarray(ox, dtype=np.int64)
    size = n + 2 * r
    tiles = _gather_windows(ref, oy, ox, n)
    areas = _gather_windows(alt, oy + np.asarray(gy, np.int64) - r, ox + np.asarray(gx, np.int64) - r, size)

    if p == 2:
        return _l2_maps_fft(tiles, areas, n, r)
    if p != 1:
        raise ValueError(f"norm power must be 1 or 2, got {p}")

    k = 2 * r + 1
    maps = np.empty((tiles.shape[0], k, k), dtype=np.float64)
    for a in range(k):
        for b in range(k):
            diff = areas[:, a : a + n, b : b + n] - tiles
            maps[:, a, b] = np.abs(diff, out=diff).sum(axis=(1, 2))
    return maps


def wiener_merge(spectra, sigma2, c, spatial_scale, freq_norms):
    frames = spectra.shape[1]
    ref = spectra[:, 0]
    acc = ref.copy()
    noise = c * sigma2[:, None, None]
    for z in range(1, frames):
        diff = ref - spectra[:, z]
        dist = diff.real * diff.real + diff.imag * diff.imag
        denom = dist + noise
        weight = np.divide(dist, denom, out=np.zeros_like(dist), where=denom > 0)
        acc += spectra[:, z]
        acc += weight * diff
    acc /= frames
    if spatial_scale > 0:
        mag2 = acc.real * acc.real + acc.imag * acc.imag
        denom = mag2 + spatial_scale * freq_norms[None] * sigma2[:, None, None]
        factor = np.divide(mag2, denom, out=np.zeros_like(mag2), where=denom > 0)
        acc *= factor
    return acc


def l1_candidate_distances(ref, alt, oy, ox, cy, cx, valid, n):
    oy = np.asarray(oy, dtype=np.int64)
    ox = np.asarray(ox, dtype=np.int64)
    cy = np.asarray(cy, dtype=np.int64)
    cx = np.asarray(cx, dtype=np.int64)
    tiles = _gather_windows(ref, oy, ox, n)
    count = cy.shape[1]
    dists = np.full((tiles.shape[0], count), np.inf, dtype=np.float64)
    for c in range(count):
        mask = valid[:, c].astype(bool)
        if not mask.any():
            continue
        windows = _gather_windows(alt, oy[mask] + cy[mask, c], ox[mask] + cx[mask, c], n)
        diff = windows - tiles[mask]
        dists[mask, c] = np.abs(diff, out=diff).sum(axis=(1, 2))
    return dists
