from dataclasses import dataclass, fields, replace
from typing import List, Optional, Sequence

import hashlib

import numpy as np

from ..errors import InputError
from ..geometry.camera import Intrinsics

UNIT_TOLERANCE = 1e-6


@dataclass
class Sample:
    """One aligned image with its ground truth.

    Only ``rgb`` and ``intrinsics`` are mandatory; a sample read from a single
    image file carries no ground truth.

    Attributes:
        rgb: ``(3, H, W)`` colours in ``[0, 1]``.
        intrinsics: Camera intrinsics.
        depth: ``(H, W)`` metric depth, 0 at invalid pixels.
        normals: ``(3, H, W)`` unit normals facing the camera, 0 at invalid pixels.
        labels: ``(H, W)`` integer class labels.
        mask: ``(H, W)`` validity of the ground truth.
    """

    rgb: np.ndarray
    intrinsics: Intrinsics
    depth: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None

    @property
    def size(self):
        """``(height, width)`` of the image."""
        return self.rgb.shape[1:]

    @property
    def valid(self) -> np.ndarray:
        """The mask, or all-true when the sample has none."""
        if self.mask is None:
            return np.ones(self.size, dtype=bool)
        return self.mask

    def replace(self, **changes) -> "Sample":
        return replace(self, **changes)

    def validate(self, num_classes: Optional[int] = None) -> "Sample":
        """Check shapes and value ranges.

        Args:
            num_classes: If given, labels at valid pixels must be below it.

        Returns:
            Sample: ``self``, for chaining.

        Raises:
            InputError: Naming the first field that violates its contract.
        """
        if self.rgb.ndim != 3 or self.rgb.shape[0] != 3:
            raise InputError(f"rgb must be (3, H, W), got {self.rgb.shape}", field="rgb")
        h, w = self.size
        valid = self.valid
        if valid.shape != (h, w):
            raise InputError(f"mask must be {(h, w)}, got {valid.shape}", field="mask")
        if self.depth is not None:
            if self.depth.shape != (h, w):
                raise InputError(f"depth must be {(h, w)}", field="depth")
            d = self.depth[valid]
            if not np.all(np.isfinite(d) & (d > 0)):
                raise InputError("depth must be positive at valid pixels", field="depth")
        if self.normals is not None:
            if self.normals.shape != (3, h, w):
                raise InputError(f"normals must be (3, {h}, {w})", field="normals")
            norms = np.linalg.norm(self.normals[:, valid], axis=0)
            if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
                raise InputError("normals must be unit vectors at valid pixels", field="normals")
        if self.labels is not None:
            if self.labels.shape != (h, w):
                raise InputError(f"labels must be {(h, w)}", field="labels")
            observed = self.labels[valid]
            if observed.size and observed.min() < 0:
                raise InputError("labels must be nonnegative", field="labels")
            if num_classes is not None and observed.size and observed.max() >= num_classes:
                raise InputError(
                    f"label {int(observed.max())} is out of range for {num_classes} classes",
                    field="labels",
                )
        return self

    def digest(self) -> str:
        """SHA-256 over every array and the intrinsics."""
        sha = hashlib.sha256()
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                sha.update(f"{f.name}:none".encode())
            elif isinstance(value, Intrinsics):
                sha.update(repr(value.to_dict()).encode())
            else:
                array = np.ascontiguousarray(value)
                sha.update(f"{f.name}:{array.dtype}:{array.shape}".encode())
                sha.update(array.tobytes())
        return sha.hexdigest()


@dataclass
class Prediction:
    """Network output at ground-truth resolution, as plain arrays.

    Attributes:
        depth: ``(H, W)`` metric depth.
        normals: ``(3, H, W)`` unit normals.
        probabilities: ``(K, H, W)`` class probabilities.
    """

    depth: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    probabilities: Optional[np.ndarray] = None

    @property
    def labels(self) -> Optional[np.ndarray]:
        """Pixel-wise maximum of the class probabilities."""
        if self.probabilities is None:
            return None
        return np.argmax(self.probabilities, axis=0)


@dataclass
class Batch:
    """Ground truth of several samples stacked along a leading batch axis."""

    mask: np.ndarray
    depth: Optional[np.ndarray] = None
    normals: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None

    def map(self, fn) -> "Batch":
        """Apply ``fn`` to every ``(..., H, W)`` array present."""
        return Batch(
            mask=fn(self.mask),
            depth=None if self.depth is None else fn(self.depth),
            normals=None if self.normals is None else fn(self.normals),
            labels=None if self.labels is None else fn(self.labels),
        )


def _stack(samples: Sequence[Sample], name: str) -> Optional[np.ndarray]:
    values = [getattr(s, name) for s in samples]
    if any(v is None for v in values):
        return None
    return np.stack(values)


def collate(samples: Sequence[Sample]) -> Batch:
    """Stack the ground truth of same-size samples.

    Raises:
        InputError: If ``samples`` is empty or sizes differ.
    """
    if not samples:
        raise InputError("Cannot collate an empty list of samples", field="samples")
    sizes = {tuple(s.size) for s in samples}
    if len(sizes) != 1:
        raise InputError(f"Samples have different sizes: {sorted(sizes)}", field="samples")
    return Batch(
        mask=np.stack([s.valid for s in samples]),
        depth=_stack(samples, "depth"),
        normals=_stack(samples, "normals"),
        labels=_stack(samples, "labels"),
    )


def as_sample_list(samples) -> List[Sample]:
    """Accept one sample or a sequence of them."""
    if isinstance(samples, Sample):
        return [samples]
    return list(samples)
