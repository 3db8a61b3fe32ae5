"""Benchmark the compiled search kernels against the NumPy fallback.

Run with `python -m rawburst.bench`. Times the distance-map and candidate
kernels on realistic grids, checks both backends agree, and reports an
end-to-end alignment timing per backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from .align import align_burst, default_config_for_tile_size, make_grid
from .kernels import available_backends
from .pyramid import build_pyramid
from .synthbench import SynthSpec, generate_clean_scene, synthesize_burst
from .burst_io import normalized_mosaic
from .pyramid import bayer_to_gray


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _bench_kernels(width: int, height: int, repeats: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(7)
    gray = generate_clean_scene(width, height, seed=7)[::2, ::2] + rng.normal(
        0, 0.01, (height // 2, width // 2)
    )
    grid = make_grid(gray.shape[0], gray.shape[1], 16)
    oy, ox = grid.origins()
    guesses = rng.integers(-3, 4, size=(grid.tile_count, 2))
    radius = 4
    extra = radius + 4

    from .align import pad_for_grid

    ref = np.ascontiguousarray(pad_for_grid(gray, grid))
    alt = np.ascontiguousarray(pad_for_grid(np.roll(gray, (1, 2), (0, 1)), grid, extra=extra))
    gy = np.ascontiguousarray(guesses[:, 1] + extra)
    gx = np.ascontiguousarray(guesses[:, 0] + extra)

    backends = available_backends()
    rows = []
    reference_maps = {}
    for p in (1, 2):
        for name, module in backends.items():
            seconds = _time(lambda: module.distance_maps(ref, alt, oy, ox, gy, gx, 16, radius, p),
                            repeats)
            maps = module.distance_maps(ref, alt, oy, ox, gy, gx, 16, radius, p)
            key = f"distance_maps L{p}"
            if key in reference_maps:
                delta = float(np.max(np.abs(maps - reference_maps[key])))
            else:
                reference_maps[key] = maps
                delta = 0.0
            rows.append((f"{key} [{name}]", seconds, delta))
    return rows


def _bench_align(repeats: int) -> list[tuple[str, float, float]]:
    spec = SynthSpec(width=1024, height=768, frames=3, seed=11)
    burst, _ = synthesize_burst(spec)
    grays = [bayer_to_gray(f, burst.meta) for f in burst.frames]
    pyramids = [build_pyramid(g) for g in grays]
    cfg = default_config_for_tile_size(16)
    rows = []
    for name, module in available_backends().items():
        seconds = _time(lambda: align_burst(pyramids, cfg, backend=module), repeats)
        rows.append((f"align_burst 1024x768 N=3 [{name}]", seconds, 0.0))
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--width", type=int, default=2048, help="mosaic width for kernel bench")
    parser.add_argument("--height", type=int, default=1536)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--skip-align", action="store_true")
    args = parser.parse_args(argv)

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    rows = _bench_kernels(args.width, args.height, args.repeats)
    if not args.skip_align:
        rows += _bench_align(max(1, args.repeats - 1))

    width = max(len(r[0]) for r in rows)
    print(f"{'case'.ljust(width)}  best_s    max|delta|")
    for label, seconds, delta in rows:
        print(f"{label.ljust(width)}  {seconds:8.4f}  {delta:.3e}")

    by_case: dict[str, dict[str, float]] = {}
    for label, seconds, _ in rows:
        case, _, backend = label.rpartition(" [")
        by_case.setdefault(case, {})[backend.rstrip("]")] = seconds
    for case, results in by_case.items():
        if {"native", "numpy"} <= results.keys():
            print(f"{case}: native speedup x{results['numpy'] / results['native']:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
