"""tiletopo: quality assessment and topological-consistency tools for map tiles.

Images are plain numpy float64 arrays in row-major order with a top-left
origin: shape ``(M, N)`` for single-channel tiles, ``(M, N, 3)`` for RGB.
Pixel values live on the 8-bit scale ``[0, 255]``; 8-bit quantization
happens only at PNG boundaries.
"""

from .image import TileGrid, crop_grid, read_png, resize, stitch, to_luminance, write_png
from .imagemath import (
    CorrelationTerms,
    canny_edges,
    flatten_progressive,
    gradient_map,
    stabilized_abs_correlation,
)
from .losses import (
    LossBreakdown,
    LossWeights,
    adversarial_loss,
    content_cycle_mrm,
    content_cycle_rmr,
    content_sup_m2r,
    content_sup_r2m,
    finite_difference_check,
    gra_l1,
    gra_str,
    identity_loss,
    loss_image_gradient,
    pixel_l1,
    topo_consistency,
    total_loss,
)
from .metrics import MetricConfig, MetricReport, essi, evaluate_pair_set, mse, ssim
from .dataset import (
    DatasetManifest,
    SampleRecord,
    SplitConfig,
    load_manifest,
    save_manifest,
    split,
    tile_pipeline,
)
from .trainer import (
    MapTileTranslator,
    ModelBundle,
    TrainingSchedule,
    ToyAffineGenerator,
    ToyStatDiscriminator,
    build_epoch_plan,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "TileGrid",
    "crop_grid",
    "read_png",
    "resize",
    "stitch",
    "to_luminance",
    "write_png",
    "CorrelationTerms",
    "canny_edges",
    "flatten_progressive",
    "gradient_map",
    "stabilized_abs_correlation",
    "LossBreakdown",
    "LossWeights",
    "adversarial_loss",
    "content_cycle_mrm",
    "content_cycle_rmr",
    "content_sup_m2r",
    "content_sup_r2m",
    "finite_difference_check",
    "gra_l1",
    "gra_str",
    "identity_loss",
    "loss_image_gradient",
    "pixel_l1",
    "topo_consistency",
    "total_loss",
    "MetricConfig",
    "MetricReport",
    "essi",
    "evaluate_pair_set",
    "mse",
    "ssim",
    "DatasetManifest",
    "SampleRecord",
    "SplitConfig",
    "load_manifest",
    "save_manifest",
    "split",
    "tile_pipeline",
    "MapTileTranslator",
    "ModelBundle",
    "TrainingSchedule",
    "ToyAffineGenerator",
    "ToyStatDiscriminator",
    "build_epoch_plan",
    "train",
]
