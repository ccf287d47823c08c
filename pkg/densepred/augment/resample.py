"""Inverse-mapped image resampling.

Geometric model about the image centre ``c``::

    dest = c + s R(theta) F (src - c) + t

where ``F`` mirrors the x axis when flipping. Every output pixel is filled by
mapping it back to the source and interpolating there.
"""

from typing import Optional, Tuple

import math

import numpy as np

from ..project_types import Size2D
from ..tensor.ops import bilinear_matrix
from .params import AugmentParams


def linear_part(params: AugmentParams) -> np.ndarray:
    """The 2x2 map ``R(theta) F`` acting on ``(x, y)`` image vectors."""
    c, s = math.cos(params.rotation), math.sin(params.rotation)
    rotation = np.array([[c, -s], [s, c]])
    flip = np.diag([-1.0, 1.0]) if params.flip else np.eye(2)
    return rotation @ flip


def inverse_map(params: AugmentParams, height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Source coordinates ``(x, y)`` of every destination pixel."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    y, x = np.mgrid[0:height, 0:width].astype(np.float64)
    dx = (x - cx - params.translation[0]) / params.scale
    dy = (y - cy - params.translation[1]) / params.scale
    inv = np.linalg.inv(linear_part(params)) if params.rotation else linear_part(params)
    src_x = cx + inv[0, 0] * dx + inv[0, 1] * dy
    src_y = cy + inv[1, 0] * dx + inv[1, 1] * dy
    return src_x, src_y


def sample_bilinear(
    image: np.ndarray,
    src_x: np.ndarray,
    src_y: np.ndarray,
    valid: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Bilinear lookup of a ``(C, H, W)`` image at fractional coordinates.

    Returns:
        tuple: The ``(C, H', W')`` samples and an ``(H', W')`` mask that is true
        only when every neighbour with a nonzero weight lies inside the image
        and is valid in ``valid``. Invalid outputs are 0.
    """
    _, h, w = image.shape
    if valid is None:
        valid = np.ones((h, w), dtype=bool)
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0

    out = np.zeros((image.shape[0],) + src_x.shape)
    ok = np.ones(src_x.shape, dtype=bool)
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            weight = wy * wx
            xi, yi = x0 + dx, y0 + dy
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xc, yc = np.clip(xi, 0, w - 1), np.clip(yi, 0, h - 1)
            contributes = weight > 0
            ok &= ~contributes | (inside & valid[yc, xc])
            out += np.where(contributes & inside, weight, 0.0) * image[:, yc, xc]
    out = np.where(ok, out, 0.0)
    return out, ok


def sample_nearest(
    image: np.ndarray, src_x: np.ndarray, src_y: np.ndarray, clamp: bool = False
) -> Tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour lookup of a ``(..., H, W)`` array.

    Args:
        image: Array to sample.
        src_x: Source column of every output pixel.
        src_y: Source row of every output pixel.
        clamp: Take the nearest edge pixel outside the image instead of 0.

    Returns:
        tuple: The samples and the in-bounds mask.
    """
    h, w = image.shape[-2:]
    xi = np.floor(src_x + 0.5).astype(np.int64)
    yi = np.floor(src_y + 0.5).astype(np.int64)
    inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
    out = image[..., np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
    if clamp:
        return out, inside
    return np.where(inside, out, 0), inside


def resize_nearest(array: np.ndarray, size: Size2D) -> np.ndarray:
    """Nearest-neighbour resize of the trailing two axes (pixel-centre aligned)."""
    h, w = array.shape[-2:]
    out_h, out_w = size
    if (h, w) == (out_h, out_w):
        return array
    rows = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.int64), w - 1)
    return array[..., rows[:, None], cols[None, :]]


def resize_bilinear(array: np.ndarray, size: Size2D) -> np.ndarray:
    """Bilinear resize of the trailing two axes, matching network upsampling."""
    h, w = array.shape[-2:]
    if (h, w) == tuple(size):
        return np.asarray(array, dtype=np.float64)
    mh = bilinear_matrix(h, size[0])
    mw = bilinear_matrix(w, size[1])
    return mh @ np.asarray(array, dtype=np.float64) @ mw.T
