"""Momentum SGD with per-layer learning-rate multipliers, and the state it keeps."""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import json

import numpy as np

from ..data.checkpoint import Checkpoint
from ..errors import FormatError, TrainingError
from ..model.network import Model

STATE_PREFIX = "state."
CURVE_TENSOR = "state/curve"
MOMENTUM_PREFIX = "momentum/"

CurvePoint = Tuple[int, float, float]


def _generator_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


@dataclass
class TrainState:
    """Everything a run needs to continue bit-identically.

    Attributes:
        step: Global step count over both phases.
        phase: Phase the last step belonged to (1 or 2).
        phase_step: Steps taken in that phase; drives the lr schedule.
        momentum: Velocity buffer per parameter name.
        curve: ``(step, loss, lr)`` per step.
        rng: Generator for batch indices, augmentation, dropout and crops.
    """

    step: int = 0
    phase: int = 1
    phase_step: int = 0
    momentum: Dict[str, np.ndarray] = field(default_factory=dict)
    curve: List[CurvePoint] = field(default_factory=list)
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    @classmethod
    def fresh(cls, seed: int) -> "TrainState":
        return cls(rng=np.random.default_rng(seed))

    def enter_phase(self, phase: int) -> None:
        if self.phase != phase:
            self.phase = phase
            self.phase_step = 0

    def to_checkpoint(self, model: Model) -> Checkpoint:
        """Model checkpoint extended with this state."""
        checkpoint = model.to_checkpoint(
            {
                STATE_PREFIX + "step": str(self.step),
                STATE_PREFIX + "phase": str(self.phase),
                STATE_PREFIX + "phase_step": str(self.phase_step),
                STATE_PREFIX + "rng": json.dumps(self.rng.bit_generator.state),
            }
        )
        curve = np.array(self.curve, dtype=np.float64).reshape(-1, 3)
        checkpoint.tensors[CURVE_TENSOR] = curve
        for name, buffer in self.momentum.items():
            checkpoint.tensors[MOMENTUM_PREFIX + name] = buffer
        return checkpoint

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "TrainState":
        """Recover the state written by :meth:`to_checkpoint`.

        Raises:
            FormatError: If the checkpoint holds no training state.
        """
        entries = checkpoint.entries
        try:
            step = int(entries[STATE_PREFIX + "step"])
            phase = int(entries[STATE_PREFIX + "phase"])
            phase_step = int(entries[STATE_PREFIX + "phase_step"])
            rng = _generator_from_state(json.loads(entries[STATE_PREFIX + "rng"]))
        except (KeyError, ValueError) as exc:
            raise FormatError(f"Checkpoint holds no valid training state: {exc}") from exc
        curve = [
            (int(s), float(loss), float(lr))
            for s, loss, lr in checkpoint.tensors.get(CURVE_TENSOR, np.zeros((0, 3)))
        ]
        momentum = {
            name[len(MOMENTUM_PREFIX):]: np.array(value, dtype=np.float64)
            for name, value in checkpoint.tensors.items()
            if name.startswith(MOMENTUM_PREFIX)
        }
        return cls(step, phase, phase_step, momentum, curve, rng)


def sgd_update(
    model: Model,
    state: TrainState,
    lr: float,
    momentum: float,
    scales: Optional[Iterable[int]] = None,
    step: Optional[int] = None,
) -> None:
    """One momentum step over the parameters of ``scales``.

    ``v <- momentum * v - lr * multiplier * g`` then ``w <- w + v``, where the
    multiplier is the layer's and a missing gradient counts as zero.

    Raises:
        TrainingError: If any gradient is not finite; nothing is updated then.

    Side Effects:
        Updates parameters and ``state.momentum`` in place.
    """
    params = model.named_parameters(scales)
    for name, tensor in params:
        if tensor.grad is not None and not np.all(np.isfinite(tensor.grad)):
            raise TrainingError(
                f"Non-finite gradient for '{name}'", layer=model.layer_of(name), step=step
            )
    for name, tensor in params:
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        velocity = state.momentum.get(name)
        if velocity is None:
            velocity = state.momentum[name] = np.zeros_like(tensor.data)
        velocity *= momentum
        velocity -= (lr * model.lr_multiplier(name)) * grad
        tensor.data += velocity
