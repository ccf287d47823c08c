"""Confusion-matrix based segmentation metrics."""

from typing import Optional

import numpy as np

from ..errors import InputError
from ..project_types import Task
from .report import MetricReport


def argmax_labels(probabilities: np.ndarray) -> np.ndarray:
    """Pixel-wise maximum over the class axis of ``(K, H, W)`` or ``(N, K, H, W)`` maps."""
    probabilities = np.asarray(probabilities)
    return np.argmax(probabilities, axis=probabilities.ndim - 3)


def confusion_matrix(
    pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray], num_classes: int
) -> np.ndarray:
    """``(K, K)`` counts; rows are ground-truth classes, columns predictions.

    Raises:
        InputError: If a label at a valid pixel lies outside ``[0, K)``.
    """
    pred = np.asarray(pred).astype(np.int64)
    gt = np.asarray(gt).astype(np.int64)
    if pred.shape != gt.shape:
        raise InputError(f"Prediction {pred.shape} and ground truth {gt.shape} differ", field="pred")
    valid = np.ones(gt.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    p, g = pred[valid], gt[valid]
    for name, labels in (("gt", g), ("pred", p)):
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise InputError(f"Labels must lie in [0, {num_classes})", field=name)
    counts = np.bincount(g * num_classes + p, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


def segmentation_metrics(
    pred_labels: np.ndarray,
    gt: np.ndarray,
    mask: Optional[np.ndarray],
    num_classes: int,
) -> MetricReport:
    """Pixel and per-class accuracy plus frequency-weighted and mean Jaccard.

    Per-class accuracy and mean Jaccard average only over classes present in
    the ground truth. The report's ``per_class`` holds the confusion matrix
    rows reduced to ``accuracy`` and ``jaccard`` (NaN for absent classes).

    Raises:
        InputError: If no pixel is valid or a label is out of range.
    """
    matrix = confusion_matrix(pred_labels, gt, mask, num_classes).astype(np.float64)
    total = matrix.sum()
    if total == 0:
        raise InputError("Segmentation metrics need at least one valid pixel", field="mask")
    tp = np.diag(matrix)
    gt_pixels = matrix.sum(axis=1)
    pred_pixels = matrix.sum(axis=0)
    present = gt_pixels > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        accuracy = np.where(present, tp / gt_pixels, np.nan)
        jaccard = np.where(present, tp / (gt_pixels + pred_pixels - tp), np.nan)
    values = {
        "pixel_acc": float(tp.sum() / total),
        "class_acc": float(np.mean(accuracy[present])),
        "freq_jaccard": float(np.sum(gt_pixels[present] / total * jaccard[present])),
        "mean_jaccard": float(np.mean(jaccard[present])),
    }
    return MetricReport(
        Task.SEMANTIC,
        values,
        int(total),
        per_class={"accuracy": accuracy, "jaccard": jaccard},
    )
