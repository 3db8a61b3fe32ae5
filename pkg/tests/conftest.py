import numpy as np
import pytest

from rawburst.burst_io import BayerFrame, BurstMetadata, RawBurst


@pytest.fixture
def meta():
    return BurstMetadata(
        iso=100.0,
        black_level=1024,
        white_level=61024,
        wb_gains=(1.0, 1.0, 1.0, 1.0),
        color_matrix=(1, 0, 0, 0, 1, 0, 0, 0, 1),
    )


def frame_from_normalized(values: np.ndarray, meta: BurstMetadata, cfa: str = "RGGB") -> BayerFrame:
    counts = np.clip(np.floor(values * meta.scale + meta.black_level + 0.5), 0, 65535)
    return BayerFrame(samples=counts.astype(np.uint16), cfa=cfa)


def random_frame(rng: np.random.Generator, height: int = 32, width: int = 32,
                 cfa: str = "RGGB") -> BayerFrame:
    return BayerFrame(
        samples=rng.integers(0, 65536, size=(height, width), dtype=np.uint16), cfa=cfa
    )


def static_burst(meta: BurstMetadata, values: np.ndarray, frames: int,
                 cfa: str = "RGGB") -> RawBurst:
    frame = frame_from_normalized(values, meta, cfa)
    return RawBurst(frames=(frame,) * frames, meta=meta)
