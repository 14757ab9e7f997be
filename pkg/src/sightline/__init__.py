"""Post-processing, loss, augmentation and evaluation machinery for single-shot weapon detection."""

from .geometry import BoundingBox, Detection, GridTensor, GroundTruthBox, decode_grid, iou
from .metrics import ConfusionCounts, MetricsRow, PRPoint
from .postprocess import filter_by_score, nms

__all__ = [
    "BoundingBox",
    "ConfusionCounts",
    "Detection",
    "GridTensor",
    "GroundTruthBox",
    "MetricsRow",
    "PRPoint",
    "decode_grid",
    "filter_by_score",
    "iou",
    "nms",
]

__version__ = "0.1.0"
