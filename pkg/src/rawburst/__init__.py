"""rawburst: raw Bayer burst alignment, Wiener merging, and finishing.

A burst of underexposed raw frames is aligned tile-by-tile against a
reference frame over a Gaussian pyramid, merged per color plane in the 2-D
DFT domain with noise-aware Wiener weights, and finished into a display-ready
8-bit image. Hot search loops run in a compiled extension when available and
fall back to NumPy otherwise (see rawburst.kernels).
"""

from .align import (
    AlignmentConfig,
    MotionField,
    TileGrid,
    align_burst,
    align_level,
    l2_distance_map,
    select_candidate_guess,
    subpixel_refine,
    tile_distance,
    upsample_motion_field,
)
from .burst_io import (
    BayerFrame,
    BurstFormatError,
    BurstMetadata,
    NoiseParams,
    RawBurst,
    derive_noise_params,
    load_burst,
    write_burst,
    write_raw16,
    write_rgb8,
)
from .finish import FinishConfig, finish_pipeline
from .kernels import BACKEND as kernel_backend
from .merge import (
    MergeConfig,
    merge_burst,
    raised_cosine_window,
    spatial_denoise_spectrum,
    temporal_merge_stack,
    tile_noise_variance,
    tile_rms,
)
from .pyramid import Pyramid, bayer_to_gray, build_pyramid, gaussian_downsample
from .synthbench import (
    SynthSpec,
    evaluate_pipeline,
    generate_clean_scene,
    psnr,
    synthesize_burst,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentConfig",
    "BayerFrame",
    "BurstFormatError",
    "BurstMetadata",
    "FinishConfig",
    "MergeConfig",
    "MotionField",
    "NoiseParams",
    "Pyramid",
    "RawBurst",
    "SynthSpec",
    "TileGrid",
    "align_burst",
    "align_level",
    "bayer_to_gray",
    "build_pyramid",
    "derive_noise_params",
    "evaluate_pipeline",
    "finish_pipeline",
    "gaussian_downsample",
    "generate_clean_scene",
    "kernel_backend",
    "l2_distance_map",
    "load_burst",
    "merge_burst",
    "psnr",
    "raised_cosine_window",
    "select_candidate_guess",
    "spatial_denoise_spectrum",
    "subpixel_refine",
    "synthesize_burst",
    "temporal_merge_stack",
    "tile_distance",
    "tile_noise_variance",
    "tile_rms",
    "upsample_motion_field",
    "write_burst",
    "write_raw16",
    "write_rgb8",
]
