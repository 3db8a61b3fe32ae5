"""Command-line orchestration: merge, finish, full, and synthbench subcommands."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import kernels
from .align import AlignmentConfig, align_burst, motion_field_csv, motion_field_hsv_image
from .burst_io import (
    BurstFormatError,
    NoiseParams,
    RawBurst,
    load_burst,
    load_raw16,
    metadata_from_json,
    normalized_mosaic,
    with_ref_index,
    write_pgm16,
    write_raw16,
    write_rgb8,
)
from .finish import FinishConfig, finish_pipeline
from .merge import MergeConfig, merge_burst
from .pyramid import bayer_to_gray, build_pyramid
from .synthbench import (
    DEFAULT_BASELINE_NOISE,
    DEFAULT_SYNTH_NOISE,
    SynthSpec,
    derive_noise_params,
    evaluate_pipeline,
)


@dataclass
class PipelineConfig:
    """Aggregate of every tunable, with the defaults used for all results."""

    ref_index: int | None = None
    tau: float = 75.0
    s: float = 0.1
    tile_size: int = 16
    search_radius: int = 4
    norms: tuple[int, ...] = (2, 2, 2, 1)
    gain: float = 8.0
    contrast_alpha: float = 0.08
    minimal: bool = False
    dump_intermediates: bool = False
    threads: int = 1
    baseline_lambda_s: float = DEFAULT_BASELINE_NOISE.lambda_s
    baseline_lambda_r: float = DEFAULT_BASELINE_NOISE.lambda_r
    sharpen_amounts: tuple[float, ...] = (1.0, 0.5, 0.5)
    sharpen_sigmas: tuple[float, ...] = (1.0, 2.0, 4.0)
    sharpen_thresholds: tuple[float, ...] = (0.02, 0.04, 0.06)

    def validate(self) -> "PipelineConfig":
        # Component configs enforce the detailed invariants.
        self.align_config()
        self.merge_config()
        self.finish_config()
        self.baseline_noise()
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.ref_index is not None and self.ref_index < 0:
            raise ValueError(f"ref_index must be >= 0, got {self.ref_index}")
        return self

    def align_config(self) -> AlignmentConfig:
        coarse = max(4, self.tile_size // 2)
        coarse -= coarse % 2
        sizes = (coarse,) + (self.tile_size,) * (len(self.norms) - 1)
        radii = (self.search_radius,) * len(self.norms)
        return AlignmentConfig(tile_sizes=sizes, search_radii=radii, norms=tuple(self.norms))

    def merge_config(self) -> MergeConfig:
        return MergeConfig(
            tile_size=self.tile_size, temporal_strength=self.tau, spatial_strength=self.s
        )

    def finish_config(self) -> FinishConfig:
        return FinishConfig(
            synthetic_gain=self.gain,
            contrast_alpha=self.contrast_alpha,
            sharpen_amounts=tuple(self.sharpen_amounts),
            sharpen_sigmas=tuple(self.sharpen_sigmas),
            sharpen_thresholds=tuple(self.sharpen_thresholds),
        )

    def baseline_noise(self) -> NoiseParams:
        return NoiseParams(self.baseline_lambda_s, self.baseline_lambda_r)


_TUPLE_KEYS = {"norms", "sharpen_amounts", "sharpen_sigmas", "sharpen_thresholds"}
_BOOL_KEYS = {"minimal", "dump_intermediates"}
_INT_KEYS = {"ref_index", "tile_size", "search_radius", "threads"}


def _coerce(key: str, raw) -> object:
    if isinstance(raw, str):
        raw = raw.strip()
    if key in _TUPLE_KEYS:
        if isinstance(raw, str):
            parts = [p for p in raw.replace(",", " ").split() if p]
        else:
            parts = list(raw)
        caster = int if key == "norms" else float
        return tuple(caster(p) for p in parts)
    if key in _BOOL_KEYS:
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def parse_config(config_path, overrides: dict) -> PipelineConfig:
    """Resolve the effective configuration: flag values override file values,
    which override defaults. Unknown keys are rejected."""
    known = {f.name for f in dataclass_fields(PipelineConfig)}
    cfg = PipelineConfig()
    if config_path is not None:
        for lineno, line in enumerate(Path(config_path).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{config_path}:{lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ValueError(f"{config_path}:{lineno}: unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, value))
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        setattr(cfg, key, _coerce(key, value) if not isinstance(value, (int, float, tuple)) else value)
    return cfg.validate()


def _config_lines(cfg: PipelineConfig) -> list[str]:
    lines = []
    for f in dataclass_fields(PipelineConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    return lines


def _write_run_log(out_dir: Path, command: str, cfg: PipelineConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    text = f"# rawburst {command} (re-run with --config on this file)\n"
    text += "\n".join(_config_lines(cfg)) + "\n"
    (out_dir / "run_config.txt").write_text(text)


def _dump_float_pgm(values: np.ndarray, path: Path) -> None:
    scaled = np.clip(values, 0.0, 1.0) * 65535.0
    write_pgm16(np.floor(scaled + 0.5).astype(np.uint16), path)


def _align_with_dumps(burst: RawBurst, cfg: PipelineConfig, out_dir: Path):
    """Shared align stage for merge/full; honors --dump-intermediates."""
    meta = burst.meta
    order = [meta.ref_index] + [i for i in range(len(burst)) if i != meta.ref_index]
    grays = [bayer_to_gray(burst.frames[i], meta) for i in order]
    pyramids = [build_pyramid(g) for g in grays]

    dump_dir = None
    on_level = None
    if cfg.dump_intermediates:
        dump_dir = out_dir / "intermediates"
        dump_dir.mkdir(parents=True, exist_ok=True)
        for fi, pyr in enumerate(pyramids):
            for li, level in enumerate(pyr.levels):
                _dump_float_pgm(level, dump_dir / f"pyramid_f{order[fi]}_L{li}.pgm")

        def on_level(alt_index: int, level: int, field) -> None:
            stem = f"motion_alt{alt_index}_L{level}"
            (dump_dir / f"{stem}.csv").write_text(motion_field_csv(field))
            write_rgb8(motion_field_hsv_image(field), dump_dir / f"{stem}.png")

    fields = align_burst(pyramids, cfg.align_config(), threads=cfg.threads, on_level=on_level)
    return fields


def _run_merge(burst: RawBurst, cfg: PipelineConfig, out_dir: Path):
    fields = _align_with_dumps(burst, cfg, out_dir)
    noise = derive_noise_params(burst.meta, cfg.baseline_noise())
    merged = merge_burst(burst, fields, noise, cfg.merge_config(), threads=cfg.threads)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_raw16(merged, out_dir / "merged.pgm")
    return merged


def _cmd_merge(args, cfg: PipelineConfig) -> int:
    burst = load_burst(args.burst_dir)
    if cfg.ref_index is not None:
        burst = with_ref_index(burst, cfg.ref_index)
    out_dir = Path(args.output)
    _write_run_log(out_dir, f"merge {args.burst_dir}", cfg)
    _run_merge(burst, cfg, out_dir)
    return 0


def _cmd_full(args, cfg: PipelineConfig) -> int:
    burst = load_burst(args.burst_dir)
    if cfg.ref_index is not None:
        burst = with_ref_index(burst, cfg.ref_index)
    out_dir = Path(args.output)
    _write_run_log(out_dir, f"full {args.burst_dir}", cfg)
    merged = _run_merge(burst, cfg, out_dir)
    rgb = finish_pipeline(merged, burst.meta, cfg.finish_config(), minimal=cfg.minimal)
    write_rgb8(rgb, out_dir / "final.png")
    return 0


def _cmd_finish(args, cfg: PipelineConfig) -> int:
    mosaic_path = Path(args.mosaic)
    meta_path = Path(args.meta) if args.meta else mosaic_path.parent / "burst.json"
    if not meta_path.is_file():
        raise BurstFormatError(f"missing metadata file {meta_path}")
    doc = json.loads(meta_path.read_text())
    meta = metadata_from_json(doc, source=str(meta_path))
    frame = load_raw16(mosaic_path, doc["cfa"])
    out_dir = Path(args.output)
    _write_run_log(out_dir, f"finish {args.mosaic}", cfg)
    rgb = finish_pipeline(frame, meta, cfg.finish_config(), minimal=cfg.minimal)
    write_rgb8(rgb, out_dir / "final.png")
    return 0


def _report_lines(report: dict) -> list[str]:
    return [f"{key}={value}" for key, value in report.items()]


def _cmd_synthbench(args, cfg: PipelineConfig) -> int:
    noise = NoiseParams(args.lambda_s, args.lambda_r)
    out_dir = Path(args.output)
    _write_run_log(out_dir, "synthbench", cfg)

    def build_spec(frames: int) -> SynthSpec:
        return SynthSpec(
            width=args.width, height=args.height, frames=frames,
            shift_max=args.shift_max, noise=noise, seed=args.seed,
        )

    def run(frames: int, tau: float, s: float) -> dict:
        merge_cfg = MergeConfig(tile_size=cfg.tile_size, temporal_strength=tau,
                                spatial_strength=s)
        return evaluate_pipeline(build_spec(frames), cfg.align_config(), merge_cfg,
                                 baseline=cfg.baseline_noise(), threads=cfg.threads)

    report = run(args.n, cfg.tau, cfg.s)
    lines = _report_lines(report)
    (out_dir / "synthbench_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))

    sweep_taus = [float(v) for v in args.sweep_tau.split(",")] if args.sweep_tau else [cfg.tau]
    sweep_ss = [float(v) for v in args.sweep_s.split(",")] if args.sweep_s else [cfg.s]
    sweep_ns = [int(v) for v in args.sweep_n.split(",")] if args.sweep_n else [args.n]
    if args.sweep_tau or args.sweep_s or args.sweep_n:
        with open(out_dir / "synthbench_sweep.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["tau", "s", "frames", "psnr_ref_db", "psnr_merged_db",
                             "gain_db", "alignment_accuracy"])
            for tau in sweep_taus:
                for s in sweep_ss:
                    for n in sweep_ns:
                        row = run(n, tau, s)
                        writer.writerow([tau, s, n, row["psnr_ref_db"],
                                         row["psnr_merged_db"], row["gain_db"],
                                         row["alignment_accuracy"]])
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rawburst",
        description="Align, merge, and finish raw Bayer bursts "
                    f"(kernel backend: {kernels.BACKEND}).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("-o", "--output", default="out", help="output directory")
        p.add_argument("--config", default=None, help="config file (key = value lines)")
        p.add_argument("--ref-index", type=int, default=None, dest="ref_index")
        p.add_argument("--tau", type=float, default=None,
                       help="temporal denoising strength")
        p.add_argument("--s", type=float, default=None, dest="s",
                       help="spatial denoising strength")
        p.add_argument("--tile-size", type=int, default=None, dest="tile_size")
        p.add_argument("--search-radius", type=int, default=None, dest="search_radius")
        p.add_argument("--norms", default=None,
                       help="per-level norm powers, coarsest first (e.g. 2,2,2,1)")
        p.add_argument("--gain", type=float, default=None,
                       help="synthetic long-exposure gain for tone mapping")
        p.add_argument("--contrast-alpha", type=float, default=None, dest="contrast_alpha")
        p.add_argument("--minimal", action="store_const", const=True, default=None,
                       help="skip tone mapping, contrast, and sharpening")
        p.add_argument("--dump-intermediates", action="store_const", const=True,
                       default=None, dest="dump_intermediates")
        p.add_argument("--threads", type=int, default=None)

    p_merge = sub.add_parser("merge", help="align and merge a burst into merged.pgm")
    p_merge.add_argument("burst_dir")
    add_common(p_merge)

    p_full = sub.add_parser("full", help="merge a burst and finish it to final.png")
    p_full.add_argument("burst_dir")
    add_common(p_full)

    p_finish = sub.add_parser("finish", help="finish any mosaic file to final.png")
    p_finish.add_argument("mosaic", help="16-bit PGM mosaic")
    p_finish.add_argument("--meta", default=None,
                          help="metadata JSON (default: burst.json next to the mosaic)")
    add_common(p_finish)

    p_bench = sub.add_parser("synthbench", help="synthetic-burst quality report")
    p_bench.add_argument("--n", type=int, default=8, help="burst length")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--width", type=int, default=1024)
    p_bench.add_argument("--height", type=int, default=768)
    p_bench.add_argument("--shift-max", type=int, default=8, dest="shift_max")
    p_bench.add_argument("--lambda-s", type=float, default=DEFAULT_SYNTH_NOISE.lambda_s,
                         dest="lambda_s")
    p_bench.add_argument("--lambda-r", type=float, default=DEFAULT_SYNTH_NOISE.lambda_r,
                         dest="lambda_r")
    p_bench.add_argument("--sweep-tau", default=None, dest="sweep_tau",
                         help="comma-separated tau values for a CSV sweep")
    p_bench.add_argument("--sweep-s", default=None, dest="sweep_s")
    p_bench.add_argument("--sweep-n", default=None, dest="sweep_n")
    add_common(p_bench)
    return parser


_CONFIG_FLAGS = ("ref_index", "tau", "s", "tile_size", "search_radius", "norms",
                 "gain", "contrast_alpha", "minimal", "dump_intermediates", "threads")

_COMMANDS = {
    "merge": _cmd_merge,
    "full": _cmd_full,
    "finish": _cmd_finish,
    "synthbench": _cmd_synthbench,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        overrides = {key: getattr(args, key) for key in _CONFIG_FLAGS}
        cfg = parse_config(args.config, overrides)
    except (ValueError, OSError) as exc:
        print(f"rawburst: bad arguments: {exc}", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args, cfg)
    except (BurstFormatError, ValueError, OSError) as exc:
        print(f"rawburst: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
