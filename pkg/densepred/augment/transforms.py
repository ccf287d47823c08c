from typing import Optional

import logging

import numpy as np

from ..data.sample import Sample
from .params import AugmentConfig, AugmentParams, sample_params
from .resample import inverse_map, linear_part, sample_bilinear, sample_nearest

logger = logging.getLogger("DensePred.Data")


def transform_normals(normals: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Apply the in-plane transform to a ``(3, ...)`` normal map.

    ``(nx, ny)`` goes through the rotation/flip (orthogonal, so it is its own
    inverse-transpose); zooming by ``s`` is equivalent to dividing depths by
    ``s``, whose inverse-transpose multiplies ``nz`` by ``s``. Nonzero vectors
    are renormalised after a zoom.
    """
    m = linear_part(params)
    nx = m[0, 0] * normals[0] + m[0, 1] * normals[1]
    ny = m[1, 0] * normals[0] + m[1, 1] * normals[1]
    nz = normals[2] * params.scale
    out = np.stack([nx, ny, nz])
    if params.scale == 1.0:
        return out
    norm = np.linalg.norm(out, axis=0)
    return np.where(norm > 0, out / np.where(norm > 0, norm, 1.0), 0.0)


def adjust_colors(rgb: np.ndarray, params: AugmentParams) -> np.ndarray:
    """Per-channel gains, then contrast about the image mean, clipped to [0, 1]."""
    gained = rgb * np.asarray(params.color)[:, None, None]
    mean = gained.mean()
    return np.clip((gained - mean) * params.contrast + mean, 0.0, 1.0)


def apply_augment(sample: Sample, params: AugmentParams) -> Sample:
    """Transform every map of a sample consistently.

    RGB and depth are resampled bilinearly, labels, mask and normals by nearest
    neighbour. Depths are divided by the zoom factor and normals transformed
    with :func:`transform_normals`. Output pixels that map outside the source,
    or that touch an invalid depth neighbour, are invalid. Colour changes touch
    the RGB map only. The intrinsics are kept.

    Args:
        sample: Source sample.
        params: The transform.

    Returns:
        Sample: A new sample; the input is returned as-is for identity params.
    """
    if params.is_identity:
        return sample
    out = sample
    if not params.is_geometric_identity:
        out = _warp(sample, params)
    if not params.is_photometric_identity:
        out = out.replace(rgb=adjust_colors(out.rgb, params))
    return out


def _warp(sample: Sample, params: AugmentParams) -> Sample:
    h, w = sample.size
    src_x, src_y = inverse_map(params, h, w)
    source_valid = sample.valid

    rgb, inside = sample_bilinear(sample.rgb, src_x, src_y)
    mask, _ = sample_nearest(source_valid, src_x, src_y)
    mask = mask.astype(bool) & inside

    depth = None
    if sample.depth is not None:
        depth_valid = source_valid & (sample.depth > 0)
        warped, ok = sample_bilinear(sample.depth[None], src_x, src_y, depth_valid)
        mask &= ok
        depth = np.where(mask, warped[0] / params.scale, 0.0)

    normals = None
    if sample.normals is not None:
        warped, _ = sample_nearest(sample.normals, src_x, src_y)
        normals = np.where(mask[None], transform_normals(warped, params), 0.0)

    labels = None
    if sample.labels is not None:
        # every value comes from the source map; the mask says which are meaningful
        labels, _ = sample_nearest(sample.labels, src_x, src_y, clamp=True)

    return sample.replace(rgb=rgb, depth=depth, normals=normals, labels=labels, mask=mask)


def random_augment(
    sample: Sample, rng: np.random.Generator, config: Optional[AugmentConfig] = None
) -> Sample:
    """Draw parameters for ``sample`` and apply them."""
    params = sample_params(rng, config or AugmentConfig(), sample.size)
    logger.debug("augment %s", params)
    return apply_augment(sample, params)
