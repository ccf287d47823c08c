# Re-export from config
from .config import (
    LayerSpec,
    ModelConfig,
    ALLOWED_SCALE_SETS,
    plan_shapes,
    scale2_grid,
    scale3_grid,
    coarse_grid,
    output_grid,
    scale3_margin,
    canonical_config,
    desk_config,
    tiny_config,
    PRESETS,
)

# Re-export from network
from .network import (
    Model,
    build_model,
    encode_inputs,
    forward_full,
    shared_trunk_forward,
    scale2_features,
    forward_scale3_crop,
)


__all__ = [
    "LayerSpec",
    "ModelConfig",
    "ALLOWED_SCALE_SETS",
    "plan_shapes",
    "scale2_grid",
    "scale3_grid",
    "coarse_grid",
    "output_grid",
    "scale3_margin",
    "canonical_config",
    "desk_config",
    "tiny_config",
    "PRESETS",
    "Model",
    "build_model",
    "encode_inputs",
    "forward_full",
    "shared_trunk_forward",
    "scale2_features",
    "forward_scale3_crop",
]
