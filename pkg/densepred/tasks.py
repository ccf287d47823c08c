"""Per-task presets: learning-rate multipliers, dropout and the training loss.

Presets live in the :data:`TASKS` registry keyed by the task's command-line
spelling, so callers resolve them by name the same way the gradient-check
suite is resolved.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

from .data.sample import Batch
from .errors import InputError
from .losses import (
    ClassWeights,
    depth_loss,
    depth_normals_loss,
    normals_loss,
    semantic_loss,
)
from .project_types import Task
from .registry import Registry
from .tensor.tensor import Tensor


@dataclass(frozen=True)
class TaskPreset:
    """Hyperparameters that differ between tasks.

    Attributes:
        task: The task the preset belongs to.
        lr_16: Learning-rate multiplier of layer 1.6.
        lr_17: Learning-rate multiplier of layer 1.7.
        dropout_16: Dropout rate after layer 1.6.
        base_lr_scale: Factor applied to the shared base learning rate.
    """

    task: Task
    lr_16: float
    lr_17: float
    dropout_16: float
    base_lr_scale: float = 1.0

    def model_overrides(self) -> Dict[str, Any]:
        """Fields of :class:`~densepred.model.config.ModelConfig` this preset sets."""
        return {
            "per_layer_lr": {"1.6": self.lr_16, "1.7": self.lr_17},
            "dropout_rate_16": self.dropout_16,
        }

    def loss(
        self, prediction: Tensor, targets: Batch, weights: Optional[ClassWeights] = None
    ) -> Tensor:
        """Training loss of a prediction against targets on the same grid.

        ``prediction`` is the network output as returned with ``scores=True``:
        log-depth, unit normals, pre-softmax class scores, or the four-channel
        depth+normals concatenation.

        Raises:
            InputError: If the batch lacks the ground truth the task needs.
        """
        _require_targets(self.task, targets)
        if self.task is Task.DEPTH:
            return depth_loss(prediction, targets.depth, targets.mask)
        if self.task is Task.NORMALS:
            return normals_loss(prediction, targets.normals, targets.mask)
        if self.task is Task.SEMANTIC:
            return semantic_loss(prediction, targets.labels, targets.mask, weights)
        return depth_normals_loss(prediction, targets.depth, targets.normals, targets.mask)


def _require_targets(task: Task, targets: Batch) -> None:
    needed = {
        Task.DEPTH: ("depth",),
        Task.NORMALS: ("normals",),
        Task.SEMANTIC: ("labels",),
        Task.DEPTH_NORMALS: ("depth", "normals"),
    }[task]
    for name in needed:
        if getattr(targets, name) is None:
            raise InputError(f"The {task.value} task needs {name} ground truth", field=name)


TASKS: Registry[TaskPreset] = Registry("tasks")

TASKS.add("depth", TaskPreset(Task.DEPTH, lr_16=0.1, lr_17=0.1, dropout_16=0.5))
TASKS.add(
    "normals",
    TaskPreset(Task.NORMALS, lr_16=0.1, lr_17=0.1, dropout_16=0.5, base_lr_scale=10.0),
)
TASKS.add("semantic", TaskPreset(Task.SEMANTIC, lr_16=1.0, lr_17=0.01, dropout_16=0.8))
TASKS.add(
    "depth+normals", TaskPreset(Task.DEPTH_NORMALS, lr_16=0.1, lr_17=0.1, dropout_16=0.5)
)


def preset_for(task) -> TaskPreset:
    """Resolve the preset of a :class:`Task` or its spelling."""
    return TASKS.resolve(Task.parse(task).value)
