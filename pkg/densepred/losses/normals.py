import numpy as np

from ..errors import InputError
from ..tensor.tensor import Tensor
from .depth import image_weights


def normals_loss(pred_normals: Tensor, target_normals: np.ndarray, mask: np.ndarray) -> Tensor:
    """Negative mean dot product between predicted and true unit normals.

    Per image ``-1/n sum_i N_i . N*_i`` over valid pixels; batches average the
    per-image values. The prediction is expected to be normalised upstream.

    Raises:
        InputError: On an empty mask or mismatched shapes.
    """
    dims = pred_normals.dims
    if len(dims) != 4 or dims[1] != 3:
        raise InputError(f"Prediction must be (N, 3, H, W), got {dims}", field="prediction")
    target = np.asarray(target_normals, dtype=np.float64)
    if target.shape != dims:
        raise InputError(f"Target normals {target.shape} do not match {dims}", field="normals")
    mask = np.asarray(mask, dtype=bool).reshape(dims[0], *dims[2:])
    counts, used = image_weights(mask)

    weight = np.zeros(mask.shape)
    for i in used:
        weight[i] = mask[i] / float(counts[i])
    weight = weight[:, None] / len(used)
    dots = np.sum(pred_normals.data * target, axis=1)
    total = -sum(np.sum(dots[i][mask[i]]) / counts[i] for i in used) / len(used)
    grad = -target * weight

    def backward(g):
        return (g * grad,)

    return Tensor.result(np.array(total), (pred_normals,), backward)
