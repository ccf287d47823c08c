from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Tuple, Union

import logging
import warnings

import numpy as np

from ..errors import ConfigurationError, FormatError, InputError

logger = logging.getLogger("DensePred.Trainer")


@dataclass
class ClassWeights:
    """Per-class loss weights ``alpha_c``.

    Attributes:
        weights: ``(K,)`` nonnegative weights indexed by class id.
    """

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 1 or np.any(self.weights < 0):
            raise ConfigurationError("Class weights must be a nonnegative vector")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def uniform(cls, num_classes: int) -> "ClassWeights":
        return cls(np.ones(num_classes))

    def __getitem__(self, class_id: int) -> float:
        return float(self.weights[class_id])

    def as_array(self, num_classes: int) -> np.ndarray:
        """The weights, checked against the class count of a prediction."""
        if self.num_classes != num_classes:
            raise ConfigurationError(
                f"{self.num_classes} class weights given for {num_classes} classes"
            )
        return self.weights

    def save(self, path: Union[str, Path]) -> None:
        """Write ``class_id weight`` lines."""
        lines = [f"{c} {w!r}" for c, w in enumerate(self.weights.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ClassWeights":
        """Read ``class_id weight`` lines; ids must be 0..K-1 in any order.

        Raises:
            FormatError: On malformed lines (offset is the 1-based line number).
        """
        entries = {}
        for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            try:
                class_id, weight = int(parts[0]), float(parts[1])
            except (IndexError, ValueError) as exc:
                raise FormatError(
                    f"Expected 'class_id weight', got '{line}'", path=str(path), offset=number
                ) from exc
            entries[class_id] = weight
        if sorted(entries) != list(range(len(entries))):
            raise FormatError("Class ids must be 0..K-1", path=str(path))
        return cls(np.array([entries[c] for c in range(len(entries))]))


def median_freq_weights(
    dataset: Iterable[Tuple[np.ndarray, np.ndarray]], num_classes: int
) -> ClassWeights:
    """Median-frequency class balancing.

    ``freq(c)`` is the number of valid pixels of class ``c`` divided by the
    number of valid pixels in the images where ``c`` occurs, and
    ``alpha_c = median(freq) / freq(c)`` with the median taken over classes that
    occur at all.

    Args:
        dataset: ``(labels, mask)`` pairs, one per image.
        num_classes: Class count K.

    Returns:
        ClassWeights: Absent classes get weight 0.

    Raises:
        InputError: If the dataset is empty or holds no valid pixel.

    Side Effects:
        Issues a warning listing classes that never occur.
    """
    class_pixels = np.zeros(num_classes)
    image_pixels = np.zeros(num_classes)
    images = 0
    for labels, mask in dataset:
        images += 1
        valid = np.asarray(mask, dtype=bool)
        counts = np.bincount(np.asarray(labels)[valid].astype(np.int64), minlength=num_classes)
        if counts.shape[0] > num_classes:
            raise InputError(
                f"Found label {counts.shape[0] - 1} with {num_classes} classes", field="labels"
            )
        present = counts > 0
        class_pixels += counts
        image_pixels[present] += valid.sum()
    if images == 0:
        raise InputError("Cannot compute class weights of an empty dataset", field="dataset")

    present = class_pixels > 0
    if not present.any():
        raise InputError("The dataset holds no valid pixel", field="dataset")
    freq = np.zeros(num_classes)
    freq[present] = class_pixels[present] / image_pixels[present]
    median = float(np.median(freq[present]))
    weights = np.zeros(num_classes)
    weights[present] = median / freq[present]
    if not present.all():
        absent = [int(c) for c in np.flatnonzero(~present)]
        warnings.warn(f"Classes {absent} never occur; their weight is 0.")
    logger.debug("median frequency %.6g over %d images", median, images)
    return ClassWeights(weights)
