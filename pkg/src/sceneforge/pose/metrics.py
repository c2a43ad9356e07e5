"""Pose-prediction metrics: per-role bin accuracy and mean oriented IoU."""

from __future__ import annotations

from dataclasses import dataclass

from ..geometry import OrientedBox, oriented_iou, theta_to_bin
from .data import PoseExample


@dataclass
class PoseMetrics:
    primary_acc: float
    dependent_acc: float
    mean_iou: float

    def to_dict(self) -> dict:
        return {
            "primary_acc": self.primary_acc,
            "dependent_acc": self.dependent_acc,
            "mean_iou": self.mean_iou,
        }


def _accuracy(ids, predicted: dict, example: PoseExample) -> float:
    scored = [i for i in ids if i not in example.low_confidence]
    if not scored:
        return 1.0
    hits = sum(1 for i in scored if theta_to_bin(predicted[i]) == example.labels[i])
    return hits / len(scored)


def pose_metrics(predicted: dict, example: PoseExample) -> PoseMetrics:
    """Bin accuracy split by role (low-confidence labels excluded) and mean
    polygon IoU between predicted- and ground-truth-oriented footprints."""
    primary_acc = _accuracy(example.primary_ids, predicted, example)
    dependent_acc = _accuracy(example.dependent_ids, predicted, example)
    ious = []
    for obj in example.layout.objects:
        if obj.box.area <= 0.0:
            continue
        pred_box = OrientedBox.from_aabb(obj.box, predicted[obj.id])
        gt_box = OrientedBox.from_aabb(obj.box, example.thetas[obj.id])
        ious.append(oriented_iou(pred_box, gt_box))
    mean_iou = sum(ious) / len(ious) if ious else 1.0
    return PoseMetrics(primary_acc, dependent_acc, mean_iou)
