"""False-colour renderings of prediction and ground-truth maps."""

from pathlib import Path
from typing import Optional, Union

import numpy as np

from .netpbm import write_ppm
from .sample import Prediction, Sample

# Control points of a blue-to-yellow colormap, near to far.
DEPTH_COLORMAP = np.array(
    [
        [0.27, 0.00, 0.33],
        [0.23, 0.32, 0.55],
        [0.13, 0.57, 0.55],
        [0.37, 0.79, 0.38],
        [0.99, 0.91, 0.14],
    ]
)

LABEL_PALETTE = np.array(
    [
        [0.50, 0.50, 0.50],
        [0.90, 0.10, 0.10],
        [0.10, 0.70, 0.20],
        [0.15, 0.30, 0.90],
        [0.95, 0.75, 0.10],
        [0.60, 0.20, 0.80],
        [0.10, 0.80, 0.80],
        [0.95, 0.45, 0.10],
    ]
)


def colorize_depth(
    depth: np.ndarray, mask: Optional[np.ndarray] = None, limits=None
) -> np.ndarray:
    """Map depth to ``(3, H, W)`` colours over the valid range; invalid pixels are black."""
    depth = np.asarray(depth, dtype=np.float64)
    valid = np.isfinite(depth) & (depth > 0)
    if mask is not None:
        valid &= mask
    if limits is None:
        limits = (depth[valid].min(), depth[valid].max()) if valid.any() else (0.0, 1.0)
    low, high = limits
    t = np.clip((depth - low) / max(high - low, 1e-12), 0.0, 1.0)
    position = t * (len(DEPTH_COLORMAP) - 1)
    lower = np.minimum(np.floor(position).astype(int), len(DEPTH_COLORMAP) - 2)
    frac = (position - lower)[..., None]
    rgb = (1 - frac) * DEPTH_COLORMAP[lower] + frac * DEPTH_COLORMAP[lower + 1]
    rgb = np.where(valid[..., None], rgb, 0.0)
    return rgb.transpose(2, 0, 1)


def colorize_normals(normals: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """``(n + 1) / 2`` per channel; invalid pixels are black."""
    rgb = np.clip((np.asarray(normals) + 1.0) / 2.0, 0.0, 1.0)
    if mask is not None:
        rgb = np.where(mask[None], rgb, 0.0)
    return rgb


def colorize_labels(labels: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Fixed palette, cycling past eight classes; invalid pixels are black."""
    rgb = LABEL_PALETTE[np.asarray(labels) % len(LABEL_PALETTE)].transpose(2, 0, 1)
    if mask is not None:
        rgb = np.where(mask[None], rgb, 0.0)
    return rgb


def write_visualizations(
    directory: Union[str, Path], stem: str, prediction: Prediction, sample: Optional[Sample] = None
) -> list:
    """Write ``<stem>.<map>.vis.ppm`` for every map of ``prediction``.

    When ``sample`` carries depth ground truth, predicted and true depth share
    its colour range.

    Returns:
        list: The written paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if prediction.depth is not None:
        limits = None
        if sample is not None and sample.depth is not None and sample.valid.any():
            truth = sample.depth[sample.valid]
            limits = (truth.min(), truth.max())
        path = directory / f"{stem}.depth.vis.ppm"
        write_ppm(path, colorize_depth(prediction.depth, limits=limits))
        written.append(path)
    if prediction.normals is not None:
        path = directory / f"{stem}.normals.vis.ppm"
        write_ppm(path, colorize_normals(prediction.normals))
        written.append(path)
    if prediction.probabilities is not None:
        path = directory / f"{stem}.labels.vis.ppm"
        write_ppm(path, colorize_labels(prediction.labels))
        written.append(path)
    return written
