"""Coarse-to-fine tile-based motion estimation against a reference frame.

Each pyramid level is divided into square tiles overlapped by half. For every
reference tile the displacement minimizing an L1 or L2 distance is searched
within a radius around an initial guess propagated from the coarser level;
L2 minima are refined to subpixel precision by a quadratic fit (never at the
finest level, whose vectors must stay integral so they can be applied to the
half-resolution color planes directly).

Vector convention: a motion vector (u, v) means the alternate-frame content
matching reference pixel (y, x) sits at (y + v, x + u); u is the column
displacement, v the row displacement.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .kernels.numpy_backend import _l2_maps_fft
from .pyramid import Pyramid


@dataclass(frozen=True)
class TileGrid:
    """Half-overlapped tile layout over one reflect-padded image level.

    The padded image carries a half-tile ring on every side plus a round-up
    margin, so the grid covers it exactly and every original pixel falls in
    a full 2x2 group of overlapping tiles.
    """

    tile_size: int
    tiles_y: int
    tiles_x: int
    height: int  # unpadded level dims
    width: int
    level: int = 0

    @property
    def stride(self) -> int:
        return self.tile_size // 2

    @property
    def padded_height(self) -> int:
        return (self.tiles_y + 1) * self.stride

    @property
    def padded_width(self) -> int:
        return (self.tiles_x + 1) * self.stride

    @property
    def tile_count(self) -> int:
        return self.tiles_y * self.tiles_x

    def origins(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major per-tile origins (padded coordinates)."""
        ty, tx = np.divmod(np.arange(self.tile_count, dtype=np.int64), self.tiles_x)
        return ty * self.stride, tx * self.stride


def make_grid(height: int, width: int, tile_size: int, level: int = 0) -> TileGrid:
    if tile_size % 2 or tile_size < 2:
        raise ValueError(f"tile size must be even and >= 2, got {tile_size}")
    stride = tile_size // 2
    tiles_y = -(-height // stride) + 1
    tiles_x = -(-width // stride) + 1
    return TileGrid(tile_size, tiles_y, tiles_x, height, width, level)


def pad_for_grid(img: np.ndarray, grid: TileGrid, extra: int = 0) -> np.ndarray:
    """Reflect-pad a level so every grid tile (plus `extra` margin) is valid."""
    stride = grid.stride
    top = stride + extra
    left = stride + extra
    bottom = grid.padded_height - grid.height - stride + extra
    right = grid.padded_width - grid.width - stride + extra
    return np.pad(img, ((top, bottom), (left, right)), mode="reflect")


@dataclass(frozen=True)
class MotionField:
    """Per-tile displacement vectors for one pyramid level.

    vectors has shape (tiles_y, tiles_x, 2) with (u, v) in the last axis.
    """

    grid: TileGrid
    vectors: np.ndarray

    def __post_init__(self):
        expected = (self.grid.tiles_y, self.grid.tiles_x, 2)
        if self.vectors.shape != expected:
            raise ValueError(f"vectors shape {self.vectors.shape} != grid shape {expected}")

    @classmethod
    def zero(cls, grid: TileGrid) -> "MotionField":
        return cls(grid, np.zeros((grid.tiles_y, grid.tiles_x, 2), dtype=np.float64))


@dataclass(frozen=True)
class AlignmentConfig:
    """Per-level alignment tuning, listed coarsest first."""

    tile_sizes: tuple[int, ...] = (8, 16, 16, 16)
    search_radii: tuple[int, ...] = (4, 4, 4, 4)
    norms: tuple[int, ...] = (2, 2, 2, 1)
    subpixel_enabled: bool = True

    def __post_init__(self):
        if not len(self.tile_sizes) == len(self.search_radii) == len(self.norms):
            raise ValueError("tile_sizes, search_radii and norms must have equal length")
        if any(n % 2 or n < 2 for n in self.tile_sizes):
            raise ValueError(f"tile sizes must be even, got {self.tile_sizes}")
        if any(r < 1 for r in self.search_radii):
            raise ValueError(f"search radii must be >= 1, got {self.search_radii}")
        if any(p not in (1, 2) for p in self.norms):
            raise ValueError(f"norms must be 1 or 2, got {self.norms}")

    @property
    def levels(self) -> int:
        return len(self.tile_sizes)


def default_config_for_tile_size(tile_size: int = 16) -> AlignmentConfig:
    """Standard 4-level schedule: half-size tiles at the coarsest level."""
    coarse = max(4, tile_size // 2)
    return AlignmentConfig(tile_sizes=(coarse, tile_size, tile_size, tile_size))


# ----------------------------------------------------------------------------
# Tile distances
# ----------------------------------------------------------------------------

def tile_distance(tile: np.ndarray, area: np.ndarray, u: int, v: int, p: int) -> float:
    """Distance between `tile` and the candidate window of `area` at offset
    (u, v) from the area center: sum of |difference|^p."""
    n = tile.shape[0]
    r = (area.shape[0] - n) // 2
    window = area[r + v : r + v + n, r + u : r + u + n]
    diff = np.abs(tile - window)
    if p == 1:
        return float(diff.sum())
    if p == 2:
        return float((diff * diff).sum())
    raise ValueError(f"norm power must be 1 or 2, got {p}")


def l2_distance_map(tile: np.ndarray, area: np.ndarray) -> np.ndarray:
    """All-offset squared L2 distances between `tile` (n x n) and the windows
    of `area` ((n+2r) x (n+2r)), computed with the three-term expansion whose
    cross-correlation term uses FFTs.

    Returns a (2r+1, 2r+1) map; entry [v+r, u+r] is the distance at (u, v).
    """
    n = tile.shape[0]
    if area.shape[0] != area.shape[1] or (area.shape[0] - n) % 2:
        raise ValueError(f"search area {area.shape} inconsistent with tile size {n}")
    r = (area.shape[0] - n) // 2
    tile = np.ascontiguousarray(tile, dtype=np.float64)
    area = np.ascontiguousarray(area, dtype=np.float64)
    return _l2_maps_fft(tile[None], area[None], n, r)[0]


# ----------------------------------------------------------------------------
# Subpixel refinement
# ----------------------------------------------------------------------------

def _quadratic_fit_filters() -> np.ndarray:
    # Least-squares fit of 0.5*A11*v^2 + A12*v*u + 0.5*A22*u^2 + b1*v + b2*u + c
    # over the 3x3 stencil; rows of the pseudo-inverse are the six estimation
    # filters applied to the distance window.
    coords = [(dv, du) for dv in (-1, 0, 1) for du in (-1, 0, 1)]
    design = np.array(
        [[0.5 * dv * dv, dv * du, 0.5 * du * du, dv, du, 1.0] for dv, du in coords]
    )
    return np.linalg.pinv(design)


_FIT_FILTERS = _quadratic_fit_filters()


def subpixel_refine_batch(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic-fit subpixel minima for a batch of 3x3 distance windows.

    Returns (deltas, accepted): deltas has shape (t, 2) holding (du, dv);
    a window is rejected (accepted False, delta zero) when the fitted
    curvature is not positive definite or the minimum lies a full pixel or
    more away from the window center.
    """
    flat = windows.reshape(-1, 9)
    params = flat @ _FIT_FILTERS.T
    a11, a12, a22, b1, b2 = (params[:, i] for i in range(5))

    det = a11 * a22 - a12 * a12
    positive_definite = (a11 > 0) & (det > 0)

    deltas = np.zeros((flat.shape[0], 2), dtype=np.float64)
    safe_det = np.where(positive_definite, det, 1.0)
    mv = -(a22 * b1 - a12 * b2) / safe_det
    mu = -(a11 * b2 - a12 * b1) / safe_det
    accepted = positive_definite & (mu * mu + mv * mv < 1.0)
    deltas[:, 0] = np.where(accepted, mu, 0.0)
    deltas[:, 1] = np.where(accepted, mv, 0.0)
    return deltas, accepted


def subpixel_refine(dmap: np.ndarray):
    """Subpixel minimum of one 3x3 distance window centered on an integer
    minimum; returns (du, dv) or None when the fit is rejected."""
    if dmap.shape != (3, 3):
        raise ValueError(f"expected a 3x3 window, got {dmap.shape}")
    deltas, accepted = subpixel_refine_batch(np.asarray(dmap, dtype=np.float64)[None])
    if not accepted[0]:
        return None
    return float(deltas[0, 0]), float(deltas[0, 1])


# ----------------------------------------------------------------------------
# Coarse-to-fine propagation
# ----------------------------------------------------------------------------

def _round_int(values: np.ndarray) -> np.ndarray:
    return np.floor(values + 0.5).astype(np.int64)


def _owner_indices(fine_idx: np.ndarray, fine_stride: int, scale: int, coarse_stride: int,
                   coarse_count: int) -> np.ndarray:
    # Stride-cell ownership in scene coordinates; both grids carry a one-ring
    # offset, hence the -1/+1 shift.
    cell = np.floor_divide((fine_idx - 1) * fine_stride, scale * coarse_stride) + 1
    return np.clip(cell, 0, coarse_count - 1)


def upsample_motion_field(coarse: MotionField, scale: int, fine_grid: TileGrid) -> MotionField:
    """Scale coarse vectors by `scale` and assign each to the fine tiles whose
    stride cell falls inside the coarse tile's stride cell."""
    cg = coarse.grid
    ty = _owner_indices(np.arange(fine_grid.tiles_y), fine_grid.stride, scale, cg.stride, cg.tiles_y)
    tx = _owner_indices(np.arange(fine_grid.tiles_x), fine_grid.stride, scale, cg.stride, cg.tiles_x)
    vectors = coarse.vectors[np.ix_(ty, tx)] * float(scale)
    return MotionField(fine_grid, vectors)


def _candidate_vectors(coarse: MotionField, scale: int, fine_grid: TileGrid):
    """Per fine tile: up to three scaled candidate vectors (own coarse tile,
    nearest horizontal neighbor, nearest vertical neighbor) plus validity.

    Neighbors are picked by which side of the owning coarse tile's center the
    fine tile's center falls; missing neighbors at grid borders are dropped.
    """
    cg = coarse.grid
    fty = np.arange(fine_grid.tiles_y)
    ftx = np.arange(fine_grid.tiles_x)
    own_y = _owner_indices(fty, fine_grid.stride, scale, cg.stride, cg.tiles_y)
    own_x = _owner_indices(ftx, fine_grid.stride, scale, cg.stride, cg.tiles_x)

    # Scene-coordinate centers (one-ring origin offset).
    fine_cy = (fty - 1) * fine_grid.stride + fine_grid.tile_size / 2.0
    fine_cx = (ftx - 1) * fine_grid.stride + fine_grid.tile_size / 2.0
    coarse_cy = ((own_y - 1) * cg.stride + cg.tile_size / 2.0) * scale
    coarse_cx = ((own_x - 1) * cg.stride + cg.tile_size / 2.0) * scale
    side_y = np.where(fine_cy >= coarse_cy, 1, -1)
    side_x = np.where(fine_cx >= coarse_cx, 1, -1)

    neigh_y = own_y + side_y
    neigh_x = own_x + side_x
    valid_y = (neigh_y >= 0) & (neigh_y < cg.tiles_y)
    valid_x = (neigh_x >= 0) & (neigh_x < cg.tiles_x)

    oy = np.broadcast_to(own_y[:, None], (fine_grid.tiles_y, fine_grid.tiles_x))
    ox = np.broadcast_to(own_x[None, :], (fine_grid.tiles_y, fine_grid.tiles_x))
    ny = np.broadcast_to(np.clip(neigh_y, 0, cg.tiles_y - 1)[:, None], oy.shape)
    nx = np.broadcast_to(np.clip(neigh_x, 0, cg.tiles_x - 1)[None, :], oy.shape)

    scaled = coarse.vectors * float(scale)
    candidates = np.stack(
        [
            scaled[oy, ox],          # own coarse tile
            scaled[oy, nx],          # horizontal neighbor
            scaled[ny, ox],          # vertical neighbor
        ],
        axis=2,
    )  # (ty, tx, 3, 2)
    valid = np.ones(candidates.shape[:3], dtype=np.uint8)
    valid[:, :, 1] &= np.broadcast_to(valid_x[None, :], oy.shape).astype(np.uint8)
    valid[:, :, 2] &= np.broadcast_to(valid_y[:, None], oy.shape).astype(np.uint8)
    return candidates, valid


def _select_candidates(ref_padded: np.ndarray, alt_padded: np.ndarray, extra: int,
                       fine_grid: TileGrid, candidates: np.ndarray, valid: np.ndarray,
                       backend=kernels) -> np.ndarray:
    """Among the candidate vectors of each tile, keep the one whose alternate
    tile is closest to the reference tile in L1 distance (first wins on ties).

    `alt_padded` carries `extra` margin beyond the base grid padding; every
    rounded candidate magnitude must stay within it.
    """
    t = fine_grid.tile_count
    cand = candidates.reshape(t, -1, 2)
    cand_int = _round_int(cand)
    oy, ox = fine_grid.origins()
    dists = backend.l1_candidate_distances(
        ref_padded, alt_padded, oy, ox,
        np.ascontiguousarray(cand_int[:, :, 1] + extra),
        np.ascontiguousarray(cand_int[:, :, 0] + extra),
        np.ascontiguousarray(valid.reshape(t, -1)),
        fine_grid.tile_size,
    )
    best = dists.argmin(axis=1)
    chosen = cand[np.arange(t), best]
    return chosen.reshape(fine_grid.tiles_y, fine_grid.tiles_x, 2)


def select_candidate_guess(fine_tile_pos: tuple[int, int], coarse_field: MotionField,
                           scale: int, ref_level: np.ndarray, alt_level: np.ndarray,
                           fine_grid: TileGrid) -> tuple[float, float]:
    """Initial-guess selection for a single fine tile (see _select_candidates)."""
    candidates, valid = _candidate_vectors(coarse_field, scale, fine_grid)
    extra = int(np.abs(_round_int(candidates)).max(initial=0))
    ref_p = np.ascontiguousarray(pad_for_grid(ref_level, fine_grid))
    alt_p = np.ascontiguousarray(pad_for_grid(alt_level, fine_grid, extra=extra))
    chosen = _select_candidates(ref_p, alt_p, extra, fine_grid, candidates, valid)
    u, v = chosen[fine_tile_pos[0], fine_tile_pos[1]]
    return float(u), float(v)


# ----------------------------------------------------------------------------
# Per-level search and the full coarse-to-fine loop
# ----------------------------------------------------------------------------

def _search_level(ref_padded: np.ndarray, alt_padded: np.ndarray, extra: int,
                  init: MotionField, tile_size: int, radius: int, norm: int,
                  subpixel: bool, backend=kernels) -> MotionField:
    """Displacement search on pre-padded level images; see align_level."""
    grid = init.grid
    t = grid.tile_count
    n = tile_size
    k = 2 * radius + 1

    guesses = _round_int(init.vectors.reshape(t, 2))
    np.clip(guesses, -(extra - radius), extra - radius, out=guesses)
    oy, ox = grid.origins()

    maps = backend.distance_maps(
        ref_padded, alt_padded, oy, ox,
        np.ascontiguousarray(guesses[:, 1] + extra),
        np.ascontiguousarray(guesses[:, 0] + extra),
        n, radius, norm,
    )

    flat_idx = maps.reshape(t, -1).argmin(axis=1)
    a = flat_idx // k
    b = flat_idx % k
    vectors = guesses.astype(np.float64)
    vectors[:, 0] += b - radius
    vectors[:, 1] += a - radius

    if subpixel:
        interior = (a > 0) & (a < k - 1) & (b > 0) & (b < k - 1)
        # A zero-distance minimum is already a perfect match; the fitted
        # surface can only wander off it, so leave such tiles untouched.
        interior &= maps.reshape(t, -1)[np.arange(t), flat_idx] > 0
        if interior.any():
            idx = np.nonzero(interior)[0]
            offs = np.arange(-1, 2)
            wins = maps[idx[:, None, None], (a[idx, None, None] + offs[None, :, None]),
                        (b[idx, None, None] + offs[None, None, :])]
            deltas, accepted = subpixel_refine_batch(wins)
            vectors[idx] += deltas
    return MotionField(grid, vectors.reshape(grid.tiles_y, grid.tiles_x, 2))


def align_level(ref_level: np.ndarray, alt_level: np.ndarray, init: MotionField,
                tile_size: int, radius: int, norm: int,
                subpixel: bool, backend=kernels) -> MotionField:
    """Search the (2r+1)^2 displacements around each tile's initial guess and
    return guess + argmin, optionally refined to subpixel precision.

    Argmin ties break deterministically toward the smallest v, then the
    smallest u.
    """
    grid = init.grid
    guesses = _round_int(init.vectors)
    # Guard against degenerate guesses blowing up the padding.
    limit = max(grid.height, grid.width)
    extra = radius + min(int(np.abs(guesses).max(initial=0)), limit) + 1
    ref_p = np.ascontiguousarray(pad_for_grid(ref_level, grid))
    alt_p = np.ascontiguousarray(pad_for_grid(alt_level, grid, extra=extra))
    return _search_level(ref_p, alt_p, extra, init, tile_size, radius, norm,
                         subpixel, backend)


def _clamp_to_frame(field: MotionField) -> MotionField:
    """Clamp vectors so every displaced tile stays inside the padded frame."""
    grid = field.grid
    oy, ox = grid.origins()
    oy = oy.reshape(grid.tiles_y, grid.tiles_x).astype(np.float64)
    ox = ox.reshape(grid.tiles_y, grid.tiles_x).astype(np.float64)
    vectors = field.vectors.copy()
    vectors[:, :, 0] = np.clip(vectors[:, :, 0], -ox, grid.padded_width - grid.tile_size - ox)
    vectors[:, :, 1] = np.clip(vectors[:, :, 1], -oy, grid.padded_height - grid.tile_size - oy)
    return MotionField(grid, vectors)


def _level_grids(ref_pyr: Pyramid, cfg: AlignmentConfig) -> list[TileGrid]:
    return [
        make_grid(lv.shape[0], lv.shape[1], cfg.tile_sizes[i], i)
        for i, lv in enumerate(ref_pyr.levels)
    ]


def _align_one(ref_pyr: Pyramid, alt_pyr: Pyramid, cfg: AlignmentConfig,
               grids: list[TileGrid], ref_padded: list[np.ndarray | None],
               backend=kernels, on_level=None, alt_index: int = 0) -> MotionField:
    levels = len(ref_pyr)
    field = None
    for level in range(levels):
        alt_level = alt_pyr.levels[level]
        grid = grids[level]
        # A level smaller than its tile cannot support a meaningful search;
        # pass the propagated guesses through so finer levels stay sane.
        searchable = ref_padded[level] is not None
        candidates = valid = None
        if field is None:
            init = MotionField.zero(grid)
            cand_max = 0
        elif searchable:
            scale = ref_pyr.step_factor(level - 1)
            candidates, valid = _candidate_vectors(field, scale, grid)
            limit = max(grid.height, grid.width)
            cand_max = min(int(np.abs(_round_int(candidates)).max(initial=0)), limit)
        else:
            init = upsample_motion_field(field, ref_pyr.step_factor(level - 1), grid)
        if searchable:
            # One padded alternate serves candidate selection and the search.
            extra = cfg.search_radii[level] + cand_max + 1
            alt_p = np.ascontiguousarray(pad_for_grid(alt_level, grid, extra=extra))
            if candidates is not None:
                init = MotionField(grid, _select_candidates(
                    ref_padded[level], alt_p, extra, grid, candidates, valid, backend))
            field = _search_level(
                ref_padded[level], alt_p, extra, init,
                cfg.tile_sizes[level], cfg.search_radii[level], cfg.norms[level],
                subpixel=cfg.subpixel_enabled and level < levels - 1,
                backend=backend,
            )
        else:
            field = init
        if on_level is not None:
            on_level(alt_index, level, field)
    return _clamp_to_frame(field)


def align_burst(pyramids: list[Pyramid], cfg: AlignmentConfig | None = None,
                threads: int = 1, backend=kernels, on_level=None) -> list[MotionField]:
    """Estimate finest-level motion fields from the reference pyramid
    (index 0) to each alternate pyramid.

    Threading is per alternate frame; results are ordered by frame index and
    identical to a sequential run. `on_level(alt_index, level, field)`, when
    given, observes every intermediate field (debug dumps).
    """
    if cfg is None:
        cfg = AlignmentConfig()
    if len(pyramids) < 2:
        raise ValueError("need at least a reference and one alternate pyramid")
    if any(len(p) != cfg.levels for p in pyramids):
        raise ValueError(
            f"pyramids have {len(pyramids[0])} levels but config describes {cfg.levels}"
        )
    ref = pyramids[0]
    alternates = pyramids[1:]
    grids = _level_grids(ref, cfg)
    # Padded reference levels are shared read-only across alternates; None
    # marks levels too small to search.
    ref_padded: list[np.ndarray | None] = [
        np.ascontiguousarray(pad_for_grid(lv, grid))
        if min(lv.shape) >= cfg.tile_sizes[i] else None
        for i, (lv, grid) in enumerate(zip(ref.levels, grids))
    ]
    if threads > 1 and len(alternates) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_align_one, ref, alt, cfg, grids, ref_padded, backend,
                            on_level, i)
                for i, alt in enumerate(alternates)
            ]
            return [f.result() for f in futures]
    return [
        _align_one(ref, alt, cfg, grids, ref_padded, backend, on_level, i)
        for i, alt in enumerate(alternates)
    ]


# ----------------------------------------------------------------------------
# Debug rendering
# ----------------------------------------------------------------------------

def motion_field_csv(field: MotionField) -> str:
    lines = ["tile_x,tile_y,u,v"]
    vec = field.vectors
    for ty in range(field.grid.tiles_y):
        for tx in range(field.grid.tiles_x):
            lines.append(f"{tx},{ty},{vec[ty, tx, 0]:.6g},{vec[ty, tx, 1]:.6g}")
    return "\n".join(lines) + "\n"


def motion_field_hsv_image(field: MotionField) -> np.ndarray:
    """Render a field as RGB: hue encodes direction, saturation magnitude."""
    u = field.vectors[:, :, 0]
    v = field.vectors[:, :, 1]
    magnitude = np.hypot(u, v)
    peak = magnitude.max()
    sat = magnitude / peak if peak > 0 else np.zeros_like(magnitude)
    hue = (np.arctan2(v, u) / (2.0 * np.pi)) % 1.0

    # Standard HSV -> RGB with value fixed at 1.
    h6 = hue * 6.0
    sector = np.floor(h6).astype(int) % 6
    f = h6 - np.floor(h6)
    p = 1.0 - sat
    q = 1.0 - sat * f
    t = 1.0 - sat * (1.0 - f)
    one = np.ones_like(sat)
    lut = np.stack([
        np.stack([one, t, p], -1),
        np.stack([q, one, p], -1),
        np.stack([p, one, t], -1),
        np.stack([p, q, one], -1),
        np.stack([t, p, one], -1),
        np.stack([one, p, q], -1),
    ])
    rgb = np.take_along_axis(lut, sector[None, :, :, None], axis=0)[0]
    return np.clip(np.floor(rgb * 255.0 + 0.5), 0, 255).astype(np.uint8)
