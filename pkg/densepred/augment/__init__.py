# Re-export from params
from .params import AugmentConfig, AugmentParams, sample_params

# Re-export from resample
from .resample import (
    linear_part,
    inverse_map,
    sample_bilinear,
    sample_nearest,
    resize_nearest,
    resize_bilinear,
)

# Re-export from transforms
from .transforms import apply_augment, random_augment, transform_normals, adjust_colors


__all__ = [
    "AugmentConfig",
    "AugmentParams",
    "sample_params",
    "apply_augment",
    "random_augment",
    "transform_normals",
    "adjust_colors",
    "linear_part",
    "inverse_map",
    "sample_bilinear",
    "sample_nearest",
    "resize_nearest",
    "resize_bilinear",
]
