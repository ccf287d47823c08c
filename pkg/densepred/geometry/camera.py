from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..errors import ConfigurationError


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera intrinsics in pixel units.

    Camera convention: +z points into the scene, +x to the right and +y down
    the image, so pixel ``(u, v)`` looks along ``((u - cx) / fx, (v - cy) / fy, 1)``.
    Pixel centres sit at integer coordinates.

    Attributes:
        fx: Horizontal focal length.
        fy: Vertical focal length.
        cx: Principal point column.
        cy: Principal point row.
    """

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigurationError(
                f"Focal lengths must be positive, got fx={self.fx}, fy={self.fy}"
            )

    @classmethod
    def default_for(cls, width: int, height: int) -> "Intrinsics":
        """Square pixels with ``fx = fy = width`` (about 53 degrees horizontal FOV)."""
        return cls(float(width), float(width), (width - 1) / 2.0, (height - 1) / 2.0)

    def to_dict(self) -> Dict[str, float]:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, values: Dict[str, float]) -> "Intrinsics":
        return cls(
            float(values["fx"]), float(values["fy"]), float(values["cx"]), float(values["cy"])
        )


def pixel_grid(height: int, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Column and row coordinates of every pixel, each ``(height, width)``."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return u, v


def viewing_rays(height: int, width: int, K: Intrinsics) -> np.ndarray:
    """Unnormalised rays with unit z component, ``(3, height, width)``."""
    u, v = pixel_grid(height, width)
    return np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)])


def depth_to_points(depth: np.ndarray, K: Intrinsics) -> np.ndarray:
    """Back-project a depth map into camera space.

    Args:
        depth: ``(H, W)`` metric depth (z coordinate).
        K: Camera intrinsics.

    Returns:
        np.ndarray: ``(3, H, W)`` points ``((u-cx) Z/fx, (v-cy) Z/fy, Z)``.
    """
    h, w = depth.shape
    return viewing_rays(h, w, K) * depth[None]


def project_points(points: np.ndarray, K: Intrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of ``(3, ...)`` camera-space points to ``(u, v)``."""
    x, y, z = points
    return K.fx * x / z + K.cx, K.fy * y / z + K.cy
