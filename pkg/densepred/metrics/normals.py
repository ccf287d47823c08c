from typing import Optional

import numpy as np

from ..errors import InputError
from ..geometry.normals import angle_degrees
from ..project_types import Task
from .report import MetricReport

ANGLE_THRESHOLDS = (11.25, 22.5, 30.0)


def normal_metrics(
    pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None
) -> MetricReport:
    """Angular error statistics of unit normal maps.

    Args:
        pred: ``(3, H, W)`` or ``(N, 3, H, W)`` unit normals.
        gt: Ground truth of the same shape.
        mask: ``(H, W)`` or ``(N, H, W)`` validity; defaults to nonzero ``gt``.

    Returns:
        MetricReport: ``angle_mean``, ``angle_median`` (degrees) and the
        fractions of pixels with an angle below 11.25, 22.5 and 30 degrees.

    Raises:
        InputError: If no pixel is valid.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise InputError(f"Prediction {pred.shape} and ground truth {gt.shape} differ", field="pred")
    if pred.ndim == 3:
        pred, gt = pred[None], gt[None]
        mask = None if mask is None else np.asarray(mask)[None]
    if mask is None:
        mask = np.linalg.norm(gt, axis=1) > 0
    valid = np.asarray(mask, dtype=bool)
    if not valid.any():
        raise InputError("Normal metrics need at least one valid pixel", field="mask")

    p = np.moveaxis(pred, 1, 0)[:, valid]
    g = np.moveaxis(gt, 1, 0)[:, valid]
    angles = angle_degrees(p, g)
    values = {"angle_mean": float(np.mean(angles)), "angle_median": float(np.median(angles))}
    for threshold in ANGLE_THRESHOLDS:
        values[f"within_{threshold:g}"] = float(np.mean(angles < threshold))
    return MetricReport(Task.NORMALS, values, int(valid.sum()))
