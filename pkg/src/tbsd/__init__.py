"""Texture-basis smooth decomposition for anomaly detection in textured images."""

__version__ = "0.1.0"

from .anomaly_detect import (
    AnomalyMask,
    DetectionParams,
    anomaly_mask,
    estimate_theta_t,
    ssd_baseline_detect,
    tbsd_detect,
)
from .decompose import Decomposition, low_rank_decompose, soft_threshold
from .postprocess import MetricReport, close_regions, evaluate
from .quasi_detect import DirectionSet, SamplingConfig, detect_directions, find_directions, lsera_sample
from .simulate import SimSpec, fixture_suite, generate
from .smooth_basis import SmoothBasis, build_bspline_basis, build_roughness, estimate_theta, hat_operator
from .texture_learning import (
    LearnConfig,
    TextureBasis,
    TileLayout,
    build_texture_basis,
    knbn_cluster,
    learn_texture_basis,
    reconstruct_texture,
)

__all__ = [
    "AnomalyMask", "DetectionParams", "anomaly_mask", "estimate_theta_t", "ssd_baseline_detect",
    "tbsd_detect", "Decomposition", "low_rank_decompose", "soft_threshold", "MetricReport",
    "close_regions", "evaluate", "DirectionSet", "SamplingConfig", "detect_directions",
    "find_directions", "lsera_sample", "SimSpec", "fixture_suite", "generate", "SmoothBasis",
    "build_bspline_basis", "build_roughness", "estimate_theta", "hat_operator", "LearnConfig",
    "TextureBasis", "TileLayout", "build_texture_basis", "knbn_cluster", "learn_texture_basis",
    "reconstruct_texture",
]
