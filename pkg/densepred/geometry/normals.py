"""Surface normals from depth maps.

Normals are unit vectors in camera coordinates that face the camera, i.e. their
dot product with the viewing ray of their pixel is negative.
"""

from typing import NamedTuple, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError
from .camera import Intrinsics, depth_to_points

DEFAULT_WINDOW = 7

# Middle eigenvalue below this fraction of the largest means collinear points.
DEGENERACY_RATIO = 1e-12


class NormalMap(NamedTuple):
    """Normals ``(3, H, W)`` and the ``(H, W)`` mask of pixels where they are defined."""

    normals: np.ndarray
    mask: np.ndarray


def _valid_depth(depth: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    valid = np.isfinite(depth) & (depth > 0)
    if mask is not None:
        valid &= mask.astype(bool)
    return valid


def orient_toward_camera(normals: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Flip normals whose dot product with the viewing ray is positive."""
    facing = np.sum(normals * points, axis=0) > 0
    return np.where(facing[None], -normals, normals)


def normals_from_depth_planefit(
    depth: np.ndarray,
    K: Intrinsics,
    window: int = DEFAULT_WINDOW,
    mask: Optional[np.ndarray] = None,
) -> NormalMap:
    """Ground-truth normals by total-least-squares plane fitting.

    For each valid pixel the valid points inside the ``window`` x ``window``
    neighbourhood are centred and the eigenvector of their covariance with the
    smallest eigenvalue is taken as the normal.

    Args:
        depth: ``(H, W)`` metric depth.
        K: Camera intrinsics.
        window: Odd neighbourhood size, at least 3.
        mask: Optional validity mask; pixels with nonpositive depth are invalid
            regardless.

    Returns:
        NormalMap: Normals (zero where undefined) and their mask. A pixel is
        undefined when its own depth is invalid, fewer than 3 neighbours are
        valid, or the neighbours are collinear.

    Raises:
        ConfigurationError: If ``window`` is even or smaller than 3.
    """
    if window < 3 or window % 2 == 0:
        raise ConfigurationError(f"Plane-fit window must be odd and >= 3, got {window}")
    h, w = depth.shape
    valid = _valid_depth(depth, mask)
    points = depth_to_points(np.where(valid, depth, 0.0), K)
    r = window // 2

    weights = np.pad(valid.astype(np.float64), r)
    padded = np.pad(points * valid, ((0, 0), (r, r), (r, r)))
    pw = sliding_window_view(padded, (window, window), axis=(1, 2))
    ww = sliding_window_view(weights, (window, window))

    count = ww.sum(axis=(-1, -2))
    safe = np.maximum(count, 1.0)
    mean = pw.sum(axis=(-1, -2)) / safe
    centered = (pw - mean[..., None, None]) * ww
    cov = np.einsum("ahwij,bhwij->hwab", centered, centered) / safe[..., None, None]

    evals, evecs = np.linalg.eigh(cov)
    normals = np.moveaxis(evecs[..., :, 0], -1, 0)
    normals = normals / np.linalg.norm(normals, axis=0, keepdims=True)
    normals = orient_toward_camera(normals, points)

    spread = np.maximum(evals[..., 2], np.finfo(np.float64).tiny)
    defined = valid & (count >= 3) & (evals[..., 1] > DEGENERACY_RATIO * spread)
    normals = np.where(defined[None], normals, 0.0)
    return NormalMap(normals, defined)


def normals_from_depth_finitediff(
    depth: np.ndarray, K: Intrinsics, mask: Optional[np.ndarray] = None
) -> NormalMap:
    """Normals from central differences of the back-projected point map.

    The normal is the normalised cross product of the horizontal and vertical
    tangents. Border pixels and pixels with an invalid 4-neighbour are
    undefined.
    """
    h, w = depth.shape
    valid = _valid_depth(depth, mask)
    points = depth_to_points(np.where(valid, depth, 0.0), K)

    du = np.zeros_like(points)
    dv = np.zeros_like(points)
    du[:, :, 1:-1] = (points[:, :, 2:] - points[:, :, :-2]) / 2.0
    dv[:, 1:-1, :] = (points[:, 2:, :] - points[:, :-2, :]) / 2.0
    cross = np.cross(du, dv, axis=0)
    norm = np.linalg.norm(cross, axis=0)

    defined = np.zeros_like(valid)
    defined[1:-1, 1:-1] = (
        valid[1:-1, 1:-1]
        & valid[1:-1, 2:]
        & valid[1:-1, :-2]
        & valid[2:, 1:-1]
        & valid[:-2, 1:-1]
    )
    defined &= norm > 0
    normals = cross / np.where(defined, norm, 1.0)[None]
    normals = orient_toward_camera(normals, points)
    normals = np.where(defined[None], normals, 0.0)
    return NormalMap(normals, defined)


def angle_degrees(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel angle between ``(3, ...)`` unit-vector maps, in degrees."""
    dots = np.clip(np.sum(a * b, axis=0), -1.0, 1.0)
    return np.degrees(np.arccos(dots))


def normals_compatibility(
    depth: np.ndarray,
    normals: np.ndarray,
    K: Intrinsics,
    mask: Optional[np.ndarray] = None,
) -> float:
    """Mean angle between ``normals`` and finite-difference normals of ``depth``.

    Used as a diagnostic for depth+normals predictions; returns NaN when no
    pixel is defined for both.
    """
    fd = normals_from_depth_finitediff(depth, K, mask)
    both = fd.mask & (np.linalg.norm(normals, axis=0) > 0)
    if not both.any():
        return float("nan")
    return float(angle_degrees(fd.normals, normals)[both].mean())
