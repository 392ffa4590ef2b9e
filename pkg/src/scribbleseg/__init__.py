"""Interactive scribble-supervised segmentation on frozen transformer features."""

from .backbone import BackboneSpec, FeaturePyramid, encode, register_provider
from .benchmarks import four_texture_benchmark, two_texture_benchmark
from .decoder import (
    DecoderConfig,
    LabelMask,
    ProbabilityMap,
    argmax_mask,
    to_pixel_probabilities,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    InputError,
    ScribblesegError,
    SupervisionError,
)
from .featviz import pca_rgb, pca_rgb_roi
from .fusion import FusionConfig, FusedMap, fuse, init_fusion_params
from .images import ImagePlane, load_image, normalize_plane
from .loss import IGNORE_INDEX, LossConfig, focal_ce, soft_dice, total_loss
from .metrics import MetricsReport, evaluate, overlap_metrics, surface_distances
from .model import ModelState, infer_image, init_model
from .tiler import TileLayout, make_blend_mask, predict_mask, tiled_inference, tv_smooth
from .trainer import (
    ScribbleMask,
    TrainConfig,
    extract_rois,
    load_checkpoint,
    rasterize_scribbles,
    save_checkpoint,
    train,
    train_on_scribbles,
)

__version__ = "0.1.0"

__all__ = [
    "BackboneSpec",
    "CheckpointError",
    "ConfigurationError",
    "ContractError",
    "DecoderConfig",
    "FeaturePyramid",
    "FusedMap",
    "FusionConfig",
    "IGNORE_INDEX",
    "ImagePlane",
    "InputError",
    "LabelMask",
    "LossConfig",
    "MetricsReport",
    "ModelState",
    "ProbabilityMap",
    "ScribbleMask",
    "ScribblesegError",
    "SupervisionError",
    "TileLayout",
    "TrainConfig",
    "argmax_mask",
    "encode",
    "evaluate",
    "extract_rois",
    "focal_ce",
    "four_texture_benchmark",
    "fuse",
    "infer_image",
    "init_fusion_params",
    "init_model",
    "load_checkpoint",
    "load_image",
    "make_blend_mask",
    "normalize_plane",
    "overlap_metrics",
    "pca_rgb",
    "pca_rgb_roi",
    "predict_mask",
    "rasterize_scribbles",
    "register_provider",
    "save_checkpoint",
    "soft_dice",
    "surface_distances",
    "tiled_inference",
    "to_pixel_probabilities",
    "total_loss",
    "train",
    "train_on_scribbles",
    "tv_smooth",
    "two_texture_benchmark",
]
