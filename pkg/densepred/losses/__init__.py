import numpy as np

from ..tensor.ops import add, select_channels
from ..tensor.tensor import Tensor

# Re-export from depth
from .depth import depth_loss, log_depth_difference

# Re-export from normals
from .normals import normals_loss

# Re-export from reweight
from .reweight import ClassWeights, median_freq_weights

# Re-export from semantic
from .semantic import semantic_loss, log_softmax_channels


def depth_normals_loss(
    prediction: Tensor, target_depth: np.ndarray, target_normals: np.ndarray, mask: np.ndarray
) -> Tensor:
    """Sum of the depth and normals losses of a ``[log-depth, nx, ny, nz]`` map."""
    return add(
        depth_loss(select_channels(prediction, 0, 1), target_depth, mask),
        normals_loss(select_channels(prediction, 1, 4), target_normals, mask),
    )


__all__ = [
    "depth_loss",
    "normals_loss",
    "semantic_loss",
    "depth_normals_loss",
    "ClassWeights",
    "median_freq_weights",
    "log_depth_difference",
    "log_softmax_channels",
]
