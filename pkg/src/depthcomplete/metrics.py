"""Reconstruction accuracy, IoU and per-view / per-class aggregation."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .dataset import SampleStore
from .errors import DimensionError, ResolutionError
from .shapes import KINDS


def _check(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    return pred, gt.astype(bool)


def voxel_accuracy(pred, gt, threshold: float = 0.5) -> float:
    """Fraction of all voxels where ``pred > threshold`` matches ``gt``."""
    pred, gt = _check(pred, gt)
    if pred.size == 0:
        raise DimensionError("empty grids")
    return float(np.count_nonzero((pred > threshold) == gt) / pred.size)


def iou(pred, gt, threshold: float = 0.5) -> float:
    """Intersection over union of thresholded occupancy; 1.0 when both are empty."""
    pred, gt = _check(pred, gt)
    occ = pred > threshold
    union = np.count_nonzero(occ | gt)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(occ & gt) / union)


def per_sample_scores(pred, gt, threshold: float = 0.5):
    """(accuracy, iou) arrays over the leading axis."""
    pred, gt = _check(pred, gt)
    n = len(pred)
    occ = (pred > threshold).reshape(n, -1)
    gt = gt.reshape(n, -1)
    acc = (occ == gt).mean(axis=1)
    inter = (occ & gt).sum(axis=1)
    union = (occ | gt).sum(axis=1)
    ious = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return acc, ious


@dataclass
class EvalReport:
    overall_accuracy: float
    overall_iou: float
    per_angle: dict[int, float]
    per_class: dict[int, float]
    sample_count: int
    per_angle_count: dict[int, int] = field(default_factory=dict)
    threshold: float = 0.5

    def to_text(self) -> str:
        """Flat ``key value`` lines, one metric per line, keys sorted within sections."""
        lines = [f"sample_count {self.sample_count}",
                 f"threshold {self.threshold:.6g}",
                 f"overall_accuracy {self.overall_accuracy:.6f}",
                 f"overall_iou {self.overall_iou:.6f}"]
        for view in sorted(self.per_angle):
            lines.append(f"accuracy_view_{view} {self.per_angle[view]:.6f}")
        for cid in sorted(self.per_class):
            name = KINDS[cid] if 0 <= cid < len(KINDS) else str(cid)
            lines.append(f"accuracy_class_{name} {self.per_class[cid]:.6f}")
        return "\n".join(lines) + "\n"


def summarize(accuracies, ious, view_indices, class_ids, threshold=0.5) -> EvalReport:
    accuracies = np.asarray(accuracies, dtype=np.float64)
    ious = np.asarray(ious, dtype=np.float64)
    if len(accuracies) == 0:
        raise ValueError("cannot summarize zero samples")
    by_view, by_class = defaultdict(list), defaultdict(list)
    for a, v, c in zip(accuracies, view_indices, class_ids):
        by_view[int(v)].append(a)
        by_class[int(c)].append(a)
    return EvalReport(
        overall_accuracy=float(np.mean(accuracies)),
        overall_iou=float(np.mean(ious)),
        per_angle={v: float(np.mean(a)) for v, a in sorted(by_view.items())},
        per_class={c: float(np.mean(a)) for c, a in sorted(by_class.items())},
        sample_count=len(accuracies),
        per_angle_count={v: len(a) for v, a in sorted(by_view.items())},
        threshold=threshold,
    )


def evaluate(model, store: SampleStore, threshold: float = 0.5) -> EvalReport:
    """One forward pass per sample; overall figures are means of per-sample scores."""
    if not store.records:
        raise ValueError("cannot evaluate an empty store")
    if store.resolution != model.resolution:
        raise ResolutionError(
            f"{model.variant} predicts R = {model.resolution}, store has R = {store.resolution}")
    pred = model.predict(store.depths())
    acc, ious = per_sample_scores(pred, store.targets(), threshold)
    return summarize(acc, ious, [r.view_index for r in store.records],
                     [r.class_id for r in store.records], threshold)
