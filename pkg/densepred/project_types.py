from enum import Enum
from typing import (
    List,
    Protocol,
    Sequence,
    Tuple,
    TypeVar,
    TYPE_CHECKING,
)

if TYPE_CHECKING:
    from .data.sample import Prediction, Sample

T = TypeVar("T")

Size2D = Tuple[int, int]
"""A spatial size as ``(height, width)``."""

ChannelShape = Tuple[int, int, int]
"""A feature-map shape as ``(channels, height, width)``."""


class Task(Enum):
    """The pixel-map regression tasks the network can be trained for.

    Attributes:
        DEPTH: One output channel holding log-depth.
        NORMALS: Three output channels holding a unit surface normal.
        SEMANTIC: One output channel per class holding softmax probabilities.
        DEPTH_NORMALS: Shared coarse trunk with separate depth and normals
            refinement stacks; four output channels in total.
    """

    DEPTH = "depth"
    NORMALS = "normals"
    SEMANTIC = "semantic"
    DEPTH_NORMALS = "depth+normals"

    @classmethod
    def parse(cls, value: "str | Task") -> "Task":
        """Parse a task from its command-line spelling.

        Args:
            value: A ``Task`` or one of ``depth``, ``normals``, ``semantic``,
                ``depth+normals`` (``depth_normals`` is accepted too).

        Returns:
            Task: The matching member.

        Raises:
            ValueError: If the spelling is unknown.
        """
        if isinstance(value, Task):
            return value
        key = value.strip().lower().replace("_", "+")
        for member in cls:
            if member.value == key:
                return member
        raise ValueError(f"Unknown task '{value}'")

    def output_channels(self, num_classes: int = 0) -> int:
        """Number of channels C of the final prediction for this task."""
        if self is Task.DEPTH:
            return 1
        if self is Task.NORMALS:
            return 3
        if self is Task.DEPTH_NORMALS:
            return 4
        return num_classes


class Mode(Enum):
    """Evaluation mode of a forward pass.

    Attributes:
        TRAIN: Dropout active.
        EVAL: Deterministic; dropout is the identity.
    """

    TRAIN = "train"
    EVAL = "eval"


class Modality(Enum):
    """Input channels a refinement scale can read from a sample."""

    RGB = "rgb"
    DEPTH = "depth"
    NORMALS = "normals"

    @property
    def channels(self) -> int:
        return 1 if self is Modality.DEPTH else 3


class PredictorProtocol(Protocol):
    """Anything that turns samples into full-resolution predictions.

    The evaluation loop only depends on this protocol, so a trained model and a
    ground-truth echo (used to check that perfect predictions give perfect
    reports) are interchangeable.
    """

    def predict(self, samples: Sequence["Sample"]) -> List["Prediction"]:
        """Predict every sample at its ground-truth resolution.

        Args:
            samples: The samples to predict.

        Returns:
            List[Prediction]: One prediction per sample, in order.
        """
        ...

