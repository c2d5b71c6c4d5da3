"""Desk-scale flood susceptibility mapping toolkit.

Raster I/O and windowing, candidate-sample selection against a flood-class
raster, reproducible dataset splits, a frozen-encoder segmentation estimator
with imaginary-modality expansion, HR/TAR/F1 evaluation, and a CLI tying the
pipeline together.
"""

from .errors import (
    ConfigError,
    EmptyPopulationError,
    EmptyWindowError,
    RasterFormatError,
    ShapeError,
    TrainingDivergedError,
    TruncationError,
    UndefinedLossError,
    ValidationError,
    ZeroFloodError,
)
from .metrics import (
    BinaryMask,
    ConfusionCounts,
    MetricReport,
    MetricSummary,
    aggregate,
    confusion,
    f1_from,
    hit_rate,
    mask_from_fsm,
    true_alarm_rate,
)
from .model import (
    FloodSegmenter,
    focal_loss,
    focal_loss_with_grad,
    load_checkpoint,
    save_checkpoint,
)
from .raster import (
    CATEGORICAL,
    CONTINUOUS,
    BoundingBox,
    GeoTransform,
    RasterGrid,
    pixel_center,
    pixel_to_world,
    read_ascii_grid,
    read_binary_raster,
    read_window,
    world_to_pixel,
    write_binary_raster,
)
from .sampling import (
    FsmClassMap,
    GridCell,
    QuartileStats,
    SampleManifest,
    SampleMeta,
    ZonalStats,
    compute_quartiles,
    create_vector_grid,
    extract_coordinates,
    run_selection,
    select_samples,
    split_dataset,
    zone_statistics,
)
from .synthetic import make_synthetic_task, make_tiles

__version__ = "0.1.0"
