from typing import Optional

import numpy as np

from ..errors import InputError
from ..project_types import Task
from .report import MetricReport

DELTA_BASE = 1.25


def _as_batch(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    return array[None] if array.ndim == 2 else array


def depth_metrics(
    pred: np.ndarray, gt: np.ndarray, mask: Optional[np.ndarray] = None
) -> MetricReport:
    """Depth error and threshold metrics over valid pixels.

    Pixels of all images are pooled, except for the scale-invariant error,
    which is computed per image as ``mean(d^2) - mean(d)^2`` on log
    differences and then averaged over images with a valid pixel.

    Args:
        pred: ``(H, W)`` or ``(N, H, W)`` predicted depth in metres.
        gt: Ground-truth depth of the same shape.
        mask: Validity; defaults to ``gt > 0``.

    Returns:
        MetricReport: ``delta1..3``, ``abs_rel``, ``sqr_rel``, ``rms_lin``,
        ``rms_log`` and ``sc_inv``.

    Raises:
        InputError: If no pixel is valid or a depth is not positive at a valid pixel.
    """
    pred, gt = _as_batch(pred), _as_batch(gt)
    if pred.shape != gt.shape:
        raise InputError(f"Prediction {pred.shape} and ground truth {gt.shape} differ", field="pred")
    valid = gt > 0 if mask is None else _as_batch(mask).astype(bool)
    if not valid.any():
        raise InputError("Depth metrics need at least one valid pixel", field="mask")
    p, g = pred[valid], gt[valid]
    if np.any(p <= 0) or np.any(g <= 0):
        raise InputError("Depths must be positive at valid pixels", field="pred")

    ratio = np.maximum(p / g, g / p)
    diff = p - g
    log_diff = np.log(p) - np.log(g)
    values = {
        "delta1": float(np.mean(ratio < DELTA_BASE)),
        "delta2": float(np.mean(ratio < DELTA_BASE**2)),
        "delta3": float(np.mean(ratio < DELTA_BASE**3)),
        "abs_rel": float(np.mean(np.abs(diff) / g)),
        "sqr_rel": float(np.mean(diff**2 / g)),
        "rms_lin": float(np.sqrt(np.mean(diff**2))),
        "rms_log": float(np.sqrt(np.mean(log_diff**2))),
        "sc_inv": scale_invariant_error(pred, gt, valid),
    }
    return MetricReport(Task.DEPTH, values, int(valid.sum()))


def scale_invariant_error(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> float:
    """Mean over images of ``(1/n) sum d^2 - (1/n^2) (sum d)^2``, ``d = log pred - log gt``."""
    errors = []
    for p, g, m in zip(pred, gt, valid):
        if not m.any():
            continue
        d = np.log(p[m]) - np.log(g[m])
        n = d.size
        errors.append(np.sum(d**2) / n - np.sum(d) ** 2 / n**2)
    return float(np.mean(errors))
