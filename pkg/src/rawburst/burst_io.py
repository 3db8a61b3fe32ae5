"""Burst I/O: portable raw-frame and metadata formats, noise-curve derivation.

A burst directory contains ``frame_<k>.pgm`` files (binary 16-bit big-endian
PGM, maxval 65535) plus one ``burst.json`` sidecar with the sensor metadata.
Loading never rescales samples; all values round-trip bit-exactly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

CFA_LAYOUTS = ("RGGB", "BGGR", "GRBG", "GBRG")

# Channel order used everywhere for per-channel quantities (wb_gains, planes).
CHANNELS = ("R", "G1", "G2", "B")


class BurstFormatError(ValueError):
    """Malformed burst directory, frame file, or metadata."""


def cfa_offsets(cfa: str) -> dict[str, tuple[int, int]]:
    """Map channel name -> (row, col) offset of its site in the 2x2 CFA cell.

    The first green site in reading order is G1, the second G2.
    """
    if cfa not in CFA_LAYOUTS:
        raise BurstFormatError(f"unknown CFA layout {cfa!r}, expected one of {CFA_LAYOUTS}")
    offsets: dict[str, tuple[int, int]] = {}
    green = ["G1", "G2"]
    for pos, letter in zip(((0, 0), (0, 1), (1, 0), (1, 1)), cfa):
        name = green.pop(0) if letter == "G" else letter
        offsets[name] = pos
    return offsets


@dataclass(frozen=True)
class NoiseParams:
    """Affine noise curve: variance(signal) = lambda_s * signal + lambda_r.

    Both parameters are expressed for signals normalized to [0, 1] by
    (white_level - black_level).
    """

    lambda_s: float
    lambda_r: float

    def __post_init__(self):
        if self.lambda_s < 0 or self.lambda_r < 0:
            raise ValueError(f"noise parameters must be nonnegative, got {self}")

    def variance(self, signal):
        return self.lambda_s * signal + self.lambda_r


@dataclass(frozen=True)
class BurstMetadata:
    """Sensor metadata shared by all frames of a burst."""

    iso: float
    black_level: int
    white_level: int
    wb_gains: tuple[float, float, float, float]  # R, G1, G2, B
    color_matrix: tuple[float, ...]  # 3x3 row-major, sensor RGB -> linear sRGB
    noise_profile: NoiseParams | None = None
    ref_index: int = 0

    def __post_init__(self):
        if not 0 <= self.black_level < self.white_level <= 65535:
            raise BurstFormatError(
                f"levels must satisfy 0 <= black < white <= 65535, "
                f"got black={self.black_level} white={self.white_level}"
            )
        if self.iso < 100:
            raise BurstFormatError(f"iso must be >= 100, got {self.iso}")
        if len(self.wb_gains) != 4 or any(g <= 0 for g in self.wb_gains):
            raise BurstFormatError(f"wb_gains must be 4 positive numbers, got {self.wb_gains}")
        if len(self.color_matrix) != 9:
            raise BurstFormatError("color_matrix must have 9 entries (3x3 row-major)")
        if self.ref_index < 0:
            raise BurstFormatError(f"ref_index must be nonnegative, got {self.ref_index}")
        if self.noise_profile is not None:
            p = self.noise_profile
            if p.lambda_s == 0 and p.lambda_r == 0:
                raise BurstFormatError("noise_profile must not be all zero")

    @property
    def scale(self) -> int:
        """Span of the useful signal range in raw counts."""
        return self.white_level - self.black_level

    def color_matrix_array(self) -> np.ndarray:
        return np.asarray(self.color_matrix, dtype=np.float64).reshape(3, 3)


@dataclass(frozen=True)
class BayerFrame:
    """One raw mosaiced frame: 16-bit sample grid plus its CFA layout."""

    samples: np.ndarray  # uint16, shape (height, width)
    cfa: str

    def __post_init__(self):
        s = self.samples
        if s.ndim != 2:
            raise BurstFormatError(f"samples must be 2-D, got shape {s.shape}")
        if s.dtype != np.uint16:
            raise BurstFormatError(f"samples must be uint16, got {s.dtype}")
        if s.shape[0] % 2 or s.shape[1] % 2:
            raise BurstFormatError(f"frame dimensions must be even, got {s.shape[1]}x{s.shape[0]}")
        cfa_offsets(self.cfa)

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class RawBurst:
    """Ordered burst of frames sharing geometry, CFA layout, and metadata."""

    frames: tuple[BayerFrame, ...]
    meta: BurstMetadata

    def __post_init__(self):
        if len(self.frames) < 2:
            raise BurstFormatError(f"burst too short: need >= 2 frames, got {len(self.frames)}")
        first = self.frames[0]
        for i, f in enumerate(self.frames):
            if f.samples.shape != first.samples.shape:
                raise BurstFormatError(
                    f"frame 0 is {first.width}x{first.height} but frame {i} is "
                    f"{f.width}x{f.height}"
                )
            if f.cfa != first.cfa:
                raise BurstFormatError(f"frame 0 has CFA {first.cfa} but frame {i} has {f.cfa}")
        if not self.meta.ref_index < len(self.frames):
            raise BurstFormatError(
                f"ref_index {self.meta.ref_index} out of range for burst of {len(self.frames)}"
            )

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def reference(self) -> BayerFrame:
        return self.frames[self.meta.ref_index]


def derive_noise_params(meta: BurstMetadata, baseline: NoiseParams) -> NoiseParams:
    """Noise curve for a burst: the metadata profile verbatim when present,
    otherwise the ISO-scaled baseline.

    Scaling a signal by a = iso/100 scales the shot term by a and the read
    term by a^2, so the curve at ISO follows (a * lambda_s, a^2 * lambda_r)
    from the ISO-100 baseline.
    """
    if meta.noise_profile is not None:
        return meta.noise_profile
    if baseline.lambda_s == 0 and baseline.lambda_r == 0:
        raise ValueError("baseline noise parameters must not be all zero")
    alpha = meta.iso / 100.0
    return NoiseParams(alpha * baseline.lambda_s, alpha * alpha * baseline.lambda_r)


def normalized_mosaic(frame: BayerFrame, meta: BurstMetadata, clip: bool = False) -> np.ndarray:
    """Black-subtracted samples scaled to [0, 1] by the white-black span.

    Unclipped by default: sub-black noise stays negative, which keeps the
    transform linear for alignment and merging.
    """
    values = (frame.samples.astype(np.float64) - meta.black_level) / meta.scale
    if clip:
        np.clip(values, 0.0, 1.0, out=values)
    return values


def quantize_mosaic(values: np.ndarray, meta: BurstMetadata, cfa: str) -> BayerFrame:
    """Inverse of :func:`normalized_mosaic`: back to 16-bit raw counts,
    round-half-up, clamped to [black_level, white_level]."""
    counts = np.floor(values * meta.scale + meta.black_level + 0.5)
    counts = np.clip(counts, meta.black_level, meta.white_level)
    return BayerFrame(samples=counts.astype(np.uint16), cfa=cfa)


# ----------------------------------------------------------------------------
# 16-bit PGM (P5, big-endian, maxval 65535)
# ----------------------------------------------------------------------------

def write_raw16(frame: BayerFrame, path) -> None:
    """Write a frame as binary 16-bit PGM; load_raw16 round-trips bit-exactly."""
    write_pgm16(frame.samples, path)


def write_pgm16(samples: np.ndarray, path) -> None:
    samples = np.ascontiguousarray(samples, dtype=np.uint16)
    header = f"P5\n{samples.shape[1]} {samples.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(samples.astype(">u2").tobytes())


def load_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P5"):
        raise BurstFormatError(f"{path}: not a binary PGM (missing P5 magic)")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        match = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if match is None:
            raise BurstFormatError(f"{path}: truncated PGM header")
        tokens.append(match.group(1))
        pos = match.end()
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise BurstFormatError(f"{path}: non-numeric PGM header fields {tokens}") from None
    if maxval != 65535:
        raise BurstFormatError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 2
    raster = data[pos : pos + expected]
    if len(raster) != expected:
        raise BurstFormatError(f"{path}: expected {expected} raster bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=">u2").reshape(height, width).astype(np.uint16)


def load_raw16(path, cfa: str) -> BayerFrame:
    return BayerFrame(samples=load_pgm16(path), cfa=cfa)


# ----------------------------------------------------------------------------
# 8-bit RGB (PNG)
# ----------------------------------------------------------------------------

def write_rgb8(image: np.ndarray, path) -> None:
    """Write an 8-bit RGB image as PNG (lossless; round-trips exactly)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) uint8 image, got shape {image.shape}")
    Image.fromarray(image, mode="RGB").save(path, format="PNG")


def load_rgb8(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


# ----------------------------------------------------------------------------
# Burst directories
# ----------------------------------------------------------------------------

METADATA_FILENAME = "burst.json"
_FRAME_PATTERN = re.compile(r"frame_(\d+)\.pgm$")


def metadata_from_json(doc: dict, source: str = METADATA_FILENAME) -> BurstMetadata:
    required = {"cfa", "black_level", "white_level", "iso", "wb_gains", "color_matrix"}
    known = required | {"noise_profile", "ref_index"}
    missing = required - doc.keys()
    if missing:
        raise BurstFormatError(f"{source}: missing metadata fields {sorted(missing)}")
    unknown = doc.keys() - known
    if unknown:
        raise BurstFormatError(f"{source}: unknown metadata fields {sorted(unknown)}")
    profile = None
    if "noise_profile" in doc:
        np_doc = doc["noise_profile"]
        if not isinstance(np_doc, dict) or set(np_doc) != {"lambda_s", "lambda_r"}:
            raise BurstFormatError(f"{source}: noise_profile needs lambda_s and lambda_r")
        profile = NoiseParams(float(np_doc["lambda_s"]), float(np_doc["lambda_r"]))
    try:
        meta = BurstMetadata(
            iso=float(doc["iso"]),
            black_level=int(doc["black_level"]),
            white_level=int(doc["white_level"]),
            wb_gains=tuple(float(g) for g in doc["wb_gains"]),
            color_matrix=tuple(float(c) for c in doc["color_matrix"]),
            noise_profile=profile,
            ref_index=int(doc.get("ref_index", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise BurstFormatError(f"{source}: {exc}") from None
    if doc["cfa"] not in CFA_LAYOUTS:
        raise BurstFormatError(f"{source}: unknown CFA layout {doc['cfa']!r}")
    return meta


def metadata_to_json(meta: BurstMetadata, cfa: str) -> dict:
    doc = {
        "cfa": cfa,
        "black_level": meta.black_level,
        "white_level": meta.white_level,
        "iso": meta.iso,
        "wb_gains": list(meta.wb_gains),
        "color_matrix": list(meta.color_matrix),
        "ref_index": meta.ref_index,
    }
    if meta.noise_profile is not None:
        doc["noise_profile"] = {
            "lambda_s": meta.noise_profile.lambda_s,
            "lambda_r": meta.noise_profile.lambda_r,
        }
    return doc


def load_burst(directory) -> RawBurst:
    """Load and validate a burst directory.

    Frames are ordered by the integer index in their filename. Every
    invariant violation is reported with the offending file.
    """
    directory = Path(directory)
    meta_path = directory / METADATA_FILENAME
    if not meta_path.is_file():
        raise BurstFormatError(f"missing metadata file {meta_path}")
    try:
        doc = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise BurstFormatError(f"{meta_path}: invalid JSON ({exc})") from None
    meta = metadata_from_json(doc, source=str(meta_path))
    cfa = doc["cfa"]

    indexed = []
    for p in directory.iterdir():
        m = _FRAME_PATTERN.match(p.name)
        if m:
            indexed.append((int(m.group(1)), p))
    indexed.sort()
    if len(indexed) < 2:
        raise BurstFormatError(
            f"burst too short: found {len(indexed)} frame file(s) in {directory}, need >= 2"
        )

    frames = []
    for _, path in indexed:
        try:
            frames.append(load_raw16(path, cfa))
        except BurstFormatError as exc:
            raise BurstFormatError(f"{path}: {exc}") from None
    first_path = indexed[0][1]
    for (_, path), frame in zip(indexed, frames):
        if frame.samples.shape != frames[0].samples.shape:
            raise BurstFormatError(
                f"frame size mismatch: {first_path} is "
                f"{frames[0].width}x{frames[0].height} but {path} is "
                f"{frame.width}x{frame.height}"
            )
    return RawBurst(frames=tuple(frames), meta=meta)


def write_burst(burst: RawBurst, directory) -> None:
    """Materialize a burst as a directory loadable by :func:`load_burst`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    cfa = burst.frames[0].cfa
    (directory / METADATA_FILENAME).write_text(
        json.dumps(metadata_to_json(burst.meta, cfa), indent=2) + "\n"
    )
    for k, frame in enumerate(burst.frames):
        write_raw16(frame, directory / f"frame_{k}.pgm")


def with_ref_index(burst: RawBurst, ref_index: int) -> RawBurst:
    return RawBurst(frames=burst.frames, meta=replace(burst.meta, ref_index=ref_index))
