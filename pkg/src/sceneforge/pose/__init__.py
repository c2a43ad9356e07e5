"""Program-conditioned object pose prediction: labeling, model, training."""

from .data import (
    ExtractedPose,
    PoseExample,
    categories_of,
    example_from_points,
    extract_gt,
    load_dataset,
    save_dataset,
)
from .metrics import PoseMetrics, pose_metrics
from .model import (
    PoseModel,
    PoseModelConfig,
    forward_dependent,
    forward_primary,
    loss,
    loss_and_grads,
    predict,
)
from .train import AdamState, TrainConfig, train

__all__ = [
    "AdamState",
    "ExtractedPose",
    "PoseExample",
    "PoseMetrics",
    "PoseModel",
    "PoseModelConfig",
    "TrainConfig",
    "categories_of",
    "example_from_points",
    "extract_gt",
    "forward_dependent",
    "forward_primary",
    "load_dataset",
    "loss",
    "loss_and_grads",
    "pose_metrics",
    "predict",
    "save_dataset",
    "train",
]
