"""Contract tests for both kernel backends plus twin-path equivalence."""

import numpy as np
import pytest

from rawburst.kernels import available_backends

BACKENDS = available_backends()


def reference_distance_maps(ref, alt, oy, ox, gy, gx, n, r, p):
    """Slow but obviously-correct loop implementation of the kernel contract."""
    k = 2 * r + 1
    maps = np.empty((len(oy), k, k))
    for t in range(len(oy)):
        tile = ref[oy[t] : oy[t] + n, ox[t] : ox[t] + n]
        for a in range(k):
            for b in range(k):
                wy = oy[t] + gy[t] + a - r
                wx = ox[t] + gx[t] + b - r
                window = alt[wy : wy + n, wx : wx + n]
                diff = np.abs(tile - window)
                maps[t, a, b] = diff.sum() if p == 1 else (diff * diff).sum()
    return maps


def _inputs(seed=0, tiles=12, n=16, r=4):
    rng = np.random.default_rng(seed)
    ref = np.ascontiguousarray(rng.uniform(0, 1, (90, 110)))
    alt = np.ascontiguousarray(rng.uniform(0, 1, (110, 130)))
    oy = rng.integers(0, 90 - n, tiles)
    ox = rng.integers(0, 110 - n, tiles)
    gy = rng.integers(0, 8, tiles) + r
    gx = rng.integers(0, 8, tiles) + r
    return ref, alt, oy.astype(np.int64), ox.astype(np.int64), gy, gx, n, r


@pytest.mark.parametrize("backend", list(BACKENDS))
@pytest.mark.parametrize("p", [1, 2])
def test_distance_maps_match_reference(backend, p):
    ref, alt, oy, ox, gy, gx, n, r = _inputs()
    maps = BACKENDS[backend].distance_maps(ref, alt, oy, ox, gy, gx, n, r, p)
    expected = reference_distance_maps(ref, alt, oy, ox, gy, gx, n, r, p)
    np.testing.assert_allclose(maps, expected, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("backend", list(BACKENDS))
def test_l1_candidates_match_reference(backend):
    ref, alt, oy, ox, _, _, n, _ = _inputs(seed=1)
    rng = np.random.default_rng(2)
    tiles = len(oy)
    cy = rng.integers(0, 10, (tiles, 3)).astype(np.int64)
    cx = rng.integers(0, 10, (tiles, 3)).astype(np.int64)
    valid = rng.integers(0, 2, (tiles, 3)).astype(np.uint8)
    valid[:, 0] = 1  # at least one candidate per tile
    dists = BACKENDS[backend].l1_candidate_distances(
        ref, alt, oy, ox, np.ascontiguousarray(cy), np.ascontiguousarray(cx),
        np.ascontiguousarray(valid), n)
    for t in range(tiles):
        tile = ref[oy[t] : oy[t] + n, ox[t] : ox[t] + n]
        for c in range(3):
            if not valid[t, c]:
                assert dists[t, c] == np.inf
                continue
            window = alt[oy[t] + cy[t, c] : oy[t] + cy[t, c] + n,
                         ox[t] + cx[t, c] : ox[t] + cx[t, c] + n]
            assert dists[t, c] == pytest.approx(np.abs(tile - window).sum(), rel=1e-9)


@pytest.mark.skipif("native" not in BACKENDS, reason="compiled extension not built")
@pytest.mark.parametrize("p", [1, 2])
def test_twin_paths_agree(p):
    ref, alt, oy, ox, gy, gx, n, r = _inputs(seed=3, tiles=64)
    native = BACKENDS["native"].distance_maps(ref, alt, oy, ox, gy, gx, n, r, p)
    fallback = BACKENDS["numpy"].distance_maps(ref, alt, oy, ox, gy, gx, n, r, p)
    np.testing.assert_allclose(native, fallback, rtol=1e-9, atol=1e-9)
    # Argmins must agree on generic (tie-free) content.
    np.testing.assert_array_equal(
        native.reshape(len(oy), -1).argmin(1), fallback.reshape(len(oy), -1).argmin(1)
    )
