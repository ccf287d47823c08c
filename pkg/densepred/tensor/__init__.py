# Re-export from tensor
from .tensor import Tensor, parameter, as_tensor, zero_grads

# Re-export from ops
from .ops import (
    ConvSpec,
    conv_output_size,
    pool_output_size,
    conv2d,
    maxpool,
    linear,
    relu,
    bilinear_matrix,
    upsample_bilinear,
    concat_channels,
    select_channels,
    dropout,
    l2_normalize_pixels,
    softmax_channels,
    reshape,
    flatten,
    crop,
    center_crop,
    add,
    scale,
)

# Re-export from gradcheck
from .gradcheck import GradcheckReport, gradcheck, relative_error


__all__ = [
    # Types
    "Tensor",
    "ConvSpec",
    "GradcheckReport",
    # Constructors
    "parameter",
    "as_tensor",
    "zero_grads",
    # Size formulas
    "conv_output_size",
    "pool_output_size",
    # Primitives
    "conv2d",
    "maxpool",
    "linear",
    "relu",
    "bilinear_matrix",
    "upsample_bilinear",
    "concat_channels",
    "select_channels",
    "dropout",
    "l2_normalize_pixels",
    "softmax_channels",
    "reshape",
    "flatten",
    "crop",
    "center_crop",
    "add",
    "scale",
    # Verification
    "gradcheck",
    "relative_error",
]
