# Re-export from sample
from .sample import Sample, Prediction, Batch, collate, as_sample_list

# Re-export from scene
from .scene import SceneSpec, render_scene, gen_scene, interior_faces

# Re-export from tensor_file
from .tensor_file import encode_tensor, decode_tensor, write_tensor, read_tensor

# Re-export from netpbm
from .netpbm import (
    read_ppm,
    write_ppm,
    read_pgm,
    write_pgm,
    read_depth_pgm,
    write_depth_pgm,
    read_labels_pgm,
    write_labels_pgm,
    read_mask_pgm,
    write_mask_pgm,
)

# Re-export from checkpoint
from .checkpoint import Checkpoint, encode_checkpoint, decode_checkpoint, read_checkpoint, write_checkpoint

# Re-export from dataset
from .dataset import (
    DatasetMeta,
    write_sample,
    read_sample,
    write_dataset,
    load_dataset,
    generate_samples,
    generate_dataset,
)

# Re-export from visualize
from .visualize import colorize_depth, colorize_normals, colorize_labels, write_visualizations


__all__ = [
    "Sample",
    "Prediction",
    "Batch",
    "collate",
    "as_sample_list",
    "SceneSpec",
    "render_scene",
    "gen_scene",
    "interior_faces",
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "read_ppm",
    "write_ppm",
    "read_pgm",
    "write_pgm",
    "read_depth_pgm",
    "write_depth_pgm",
    "read_labels_pgm",
    "write_labels_pgm",
    "read_mask_pgm",
    "write_mask_pgm",
    "Checkpoint",
    "encode_checkpoint",
    "decode_checkpoint",
    "read_checkpoint",
    "write_checkpoint",
    "DatasetMeta",
    "write_sample",
    "read_sample",
    "write_dataset",
    "load_dataset",
    "generate_samples",
    "generate_dataset",
    "colorize_depth",
    "colorize_normals",
    "colorize_labels",
    "write_visualizations",
]
