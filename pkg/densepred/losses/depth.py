"""Scale-invariant log-depth loss with a first-order matching term.

For one image, with ``d = D - log(D*)`` over the ``n`` valid pixels::

    L = 1/n sum d^2 - 1/(2 n^2) (sum d)^2 + 1/n sum (dx d)^2 + (dy d)^2

The image-gradient term uses forward differences ``d(x+1, y) - d(x, y)``
and only counts pairs whose two pixels are both valid; pairs crossing the image
border do not exist. Batches average the per-image losses.
"""

from typing import List, Tuple

import numpy as np

from ..errors import InputError
from ..tensor.tensor import Tensor


def _batched(pred: Tensor, target: np.ndarray, mask: np.ndarray, channels: int):
    dims = pred.dims
    if len(dims) != 4 or dims[1] != channels:
        raise InputError(
            f"Prediction must be (N, {channels}, H, W), got {dims}", field="prediction"
        )
    n, _, h, w = dims
    mask = np.asarray(mask, dtype=bool).reshape(n, h, w)
    return n, h, w, mask


def image_weights(mask: np.ndarray) -> Tuple[np.ndarray, List[int]]:
    """Per-image valid pixel counts and the images that take part in the mean.

    Raises:
        InputError: If no image has a valid pixel.
    """
    counts = mask.reshape(mask.shape[0], -1).sum(axis=1)
    used = [i for i, c in enumerate(counts) if c > 0]
    if not used:
        raise InputError("The validity mask is empty", field="mask")
    return counts, used


def log_depth_difference(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``pred - log(target)`` at valid pixels, 0 elsewhere.

    Raises:
        InputError: If a valid target depth is not positive.
    """
    valid_targets = target[mask]
    if not np.all(np.isfinite(valid_targets) & (valid_targets > 0)):
        raise InputError("Target depth must be positive at valid pixels", field="depth")
    safe = np.where(mask, target, 1.0)
    return np.where(mask, pred - np.log(safe), 0.0)


def depth_loss(pred_logdepth: Tensor, target_depth: np.ndarray, mask: np.ndarray) -> Tensor:
    """Depth loss of a ``(N, 1, H, W)`` log-depth prediction.

    Args:
        pred_logdepth: Predicted log-depth.
        target_depth: ``(N, H, W)`` metric ground truth.
        mask: ``(N, H, W)`` validity.

    Returns:
        Tensor: Scalar loss; masked pixels receive exactly zero gradient.

    Raises:
        InputError: On an empty mask or a nonpositive valid target.
    """
    n_img, h, w, mask = _batched(pred_logdepth, target_depth, mask, 1)
    target = np.asarray(target_depth, dtype=np.float64).reshape(n_img, h, w)
    d = log_depth_difference(pred_logdepth.data[:, 0], target, mask)
    counts, used = image_weights(mask)

    pair_x = mask[:, :, 1:] & mask[:, :, :-1]
    pair_y = mask[:, 1:, :] & mask[:, :-1, :]
    gx = np.where(pair_x, d[:, :, 1:] - d[:, :, :-1], 0.0)
    gy = np.where(pair_y, d[:, 1:, :] - d[:, :-1, :], 0.0)

    total = 0.0
    grad = np.zeros_like(d)
    for i in used:
        n = float(counts[i])
        s = d[i].sum()
        total += (
            np.sum(d[i] ** 2) / n
            - s * s / (2.0 * n * n)
            + (np.sum(gx[i] ** 2) + np.sum(gy[i] ** 2)) / n
        )
        gi = 2.0 * d[i] / n - s / (n * n)
        gi[:, 1:] += 2.0 * gx[i] / n
        gi[:, :-1] -= 2.0 * gx[i] / n
        gi[1:, :] += 2.0 * gy[i] / n
        gi[:-1, :] -= 2.0 * gy[i] / n
        grad[i] = np.where(mask[i], gi, 0.0)
    count = len(used)

    def backward(g):
        return ((g * grad / count)[:, None],)

    return Tensor.result(np.array(total / count), (pred_logdepth,), backward)
