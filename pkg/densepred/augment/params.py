from dataclasses import dataclass
from typing import Tuple

import math

import numpy as np

from ..errors import ConfigurationError
from ..project_types import Size2D


@dataclass
class AugmentConfig:
    """Ranges transforms are drawn from.

    Attributes:
        scale_range: Zoom factor ``s``.
        rotation_degrees: In-plane rotation drawn from ``[-r, r]``.
        translation: Maximum shift as a fraction of the image size.
        color_range: Per-channel RGB gain.
        contrast_range: Contrast factor about the image mean.
        flip_prob: Probability of a horizontal flip.
    """

    scale_range: Tuple[float, float] = (1.0, 1.5)
    rotation_degrees: float = 5.0
    translation: float = 0.1
    color_range: Tuple[float, float] = (0.8, 1.2)
    contrast_range: Tuple[float, float] = (0.5, 2.0)
    flip_prob: float = 0.5

    def __post_init__(self):
        self.scale_range = tuple(float(v) for v in self.scale_range)
        self.color_range = tuple(float(v) for v in self.color_range)
        self.contrast_range = tuple(float(v) for v in self.contrast_range)
        self.validate()

    def validate(self) -> None:
        for name in ("scale_range", "color_range", "contrast_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigurationError(
                    f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})", layer=name
                )
        if self.rotation_degrees < 0 or self.translation < 0:
            raise ConfigurationError("Rotation and translation bounds must be nonnegative")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigurationError("flip_prob must lie in [0, 1]", layer="flip_prob")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        """Ranges collapsed so every draw is the identity transform."""
        return cls((1.0, 1.0), 0.0, 0.0, (1.0, 1.0), (1.0, 1.0), 0.0)


@dataclass(frozen=True)
class AugmentParams:
    """One sampled transform.

    Attributes:
        scale: Zoom factor; depths are divided by it.
        rotation: In-plane rotation in radians.
        translation: ``(tx, ty)`` shift in pixels.
        flip: Horizontal flip.
        color: Per-channel RGB gains.
        contrast: Contrast factor about the per-image mean.
    """

    scale: float = 1.0
    rotation: float = 0.0
    translation: Tuple[float, float] = (0.0, 0.0)
    flip: bool = False
    color: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    contrast: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError(f"Scale factor must be positive, got {self.scale}")

    @property
    def is_geometric_identity(self) -> bool:
        return (
            self.scale == 1.0
            and self.rotation == 0.0
            and tuple(self.translation) == (0.0, 0.0)
            and not self.flip
        )

    @property
    def is_photometric_identity(self) -> bool:
        return tuple(self.color) == (1.0, 1.0, 1.0) and self.contrast == 1.0

    @property
    def is_identity(self) -> bool:
        return self.is_geometric_identity and self.is_photometric_identity


def sample_params(rng: np.random.Generator, config: AugmentConfig, size: Size2D) -> AugmentParams:
    """Draw every field independently, always in the same order.

    Args:
        rng: Generator owned by the caller.
        config: Ranges.
        size: ``(height, width)`` of the image, scaling the translation bound.

    Returns:
        AugmentParams: The sampled transform.
    """
    height, width = size
    s = rng.uniform(*config.scale_range)
    theta = math.radians(rng.uniform(-config.rotation_degrees, config.rotation_degrees))
    tx = rng.uniform(-config.translation, config.translation) * width
    ty = rng.uniform(-config.translation, config.translation) * height
    flip = bool(rng.random() < config.flip_prob)
    color = tuple(float(g) for g in rng.uniform(*config.color_range, size=3))
    contrast = rng.uniform(*config.contrast_range)
    return AugmentParams(
        scale=float(s),
        rotation=float(theta) + 0.0,
        translation=(float(tx) + 0.0, float(ty) + 0.0),
        flip=flip,
        color=color,
        contrast=float(contrast),
    )
