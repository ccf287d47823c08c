from typing import Optional

import numpy as np

from ..errors import InputError
from ..tensor.tensor import Tensor
from .depth import image_weights
from .reweight import ClassWeights


def log_softmax_channels(scores: np.ndarray) -> np.ndarray:
    """Max-subtracted log-softmax over axis 1."""
    z = scores - scores.max(axis=1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))


def semantic_loss(
    scores: Tensor,
    target_labels: np.ndarray,
    mask: np.ndarray,
    weights: Optional[ClassWeights] = None,
) -> Tensor:
    """Pixel-wise cross-entropy of pre-softmax ``(N, K, H, W)`` scores.

    Per image ``-1/n sum_i a_i log C_{i, c_i}`` with ``a_i`` the weight of the
    true class (1 when unweighted); the weighted form still divides by the
    pixel count ``n``. Batches average the per-image values.

    Raises:
        InputError: On an empty mask or a valid label outside ``[0, K)``.
    """
    dims = scores.dims
    if len(dims) != 4:
        raise InputError(f"Scores must be (N, K, H, W), got {dims}", field="prediction")
    n_img, k, h, w = dims
    labels = np.asarray(target_labels).reshape(n_img, h, w)
    mask = np.asarray(mask, dtype=bool).reshape(n_img, h, w)
    valid_labels = labels[mask]
    if valid_labels.size and (valid_labels.min() < 0 or valid_labels.max() >= k):
        raise InputError(
            f"Labels at valid pixels must lie in [0, {k}), found "
            f"[{int(valid_labels.min())}, {int(valid_labels.max())}]",
            field="labels",
        )
    alpha = np.ones(k) if weights is None else weights.as_array(k)
    counts, used = image_weights(mask)

    safe = np.where(mask, labels, 0).astype(np.int64)
    log_probs = log_softmax_channels(scores.data)
    picked = np.take_along_axis(log_probs, safe[:, None], axis=1)[:, 0]
    pixel_alpha = np.where(mask, alpha[safe], 0.0)

    total = 0.0
    scale = np.zeros(mask.shape)
    for i in used:
        total += -np.sum(pixel_alpha[i][mask[i]] * picked[i][mask[i]]) / counts[i]
        scale[i] = pixel_alpha[i] / float(counts[i])
    total /= len(used)

    onehot = np.zeros(dims)
    np.put_along_axis(onehot, safe[:, None], 1.0, axis=1)
    grad = (np.exp(log_probs) - onehot) * (scale / len(used))[:, None]

    def backward(g):
        return (g * grad,)

    return Tensor.result(np.array(total), (scores,), backward)
