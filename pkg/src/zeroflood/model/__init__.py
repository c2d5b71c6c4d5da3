from .checkpoint import load_checkpoint, save_checkpoint
from .estimator import EarlyStopping, FloodSegmenter, TrainState
from .losses import focal_loss, focal_loss_with_grad, sigmoid
from .network import (
    MODALITIES,
    FrozenEncoder,
    SegmentationNetwork,
    TimExpander,
    UNetDecoder,
    canonical_modalities,
)

__all__ = [
    "EarlyStopping",
    "FloodSegmenter",
    "FrozenEncoder",
    "MODALITIES",
    "SegmentationNetwork",
    "TimExpander",
    "TrainState",
    "UNetDecoder",
    "canonical_modalities",
    "focal_loss",
    "focal_loss_with_grad",
    "load_checkpoint",
    "save_checkpoint",
    "sigmoid",
]
