"""The two training phases.

Phase 1 trains scales 1 and 2 jointly on whole images. Phase 2 freezes them,
evaluates them once per step on the batch and trains scale 3 on a random
window of its grid. Every random draw comes from the state's generator in a
fixed order (batch indices, augmentation per sample, dropout, crop origin),
so a run is a function of its configuration, data and seed.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import csv
import logging
import time

import numpy as np

from ..augment.resample import resize_nearest
from ..augment.transforms import random_augment
from ..data.checkpoint import read_checkpoint, write_checkpoint
from ..data.sample import Batch, Sample, collate
from ..errors import ConfigurationError, InputError, TrainingError
from ..losses.reweight import ClassWeights, median_freq_weights
from ..model.config import scale2_grid, scale3_grid
from ..model.network import Model, forward_full, forward_scale3_crop, scale2_features
from ..project_types import Mode, Task
from ..tasks import preset_for
from ..tensor.tensor import Tensor, zero_grads
from .config import TrainConfig, lr_at_step
from .optim import CurvePoint, TrainState, sgd_update

PathLike = Union[str, Path]

logger = logging.getLogger("DensePred.Trainer")


@dataclass
class TrainResult:
    """Outcome of a phase.

    Attributes:
        model: The trained model (the same object that was passed in).
        state: State after the last step, ready to continue from.
        curve: ``(step, loss, lr)`` of the steps this call took.
    """

    model: Model
    state: TrainState
    curve: List[CurvePoint]


def draw_batch(
    dataset: Sequence[Sample], config: TrainConfig, rng: np.random.Generator
) -> List[Sample]:
    """Sample ``batch_size`` indices with replacement, then augment each sample."""
    indices = rng.integers(0, len(dataset), size=config.batch_size)
    batch = [dataset[int(i)] for i in indices]
    if config.augment:
        batch = [random_augment(sample, rng, config.augment_config) for sample in batch]
    return batch


def targets_on_grid(model: Model, samples: Sequence[Sample], grid) -> Batch:
    """Ground truth trimmed to the valid region and resized (nearest) to ``grid``."""
    br, bc = model.config.border
    h, w = model.config.input_size

    def fit(array: np.ndarray) -> np.ndarray:
        return resize_nearest(array[..., br : h - br, bc : w - bc], grid)

    return collate(samples).map(fit)


def class_weights(model: Model, dataset: Sequence[Sample], config: TrainConfig) -> Optional[ClassWeights]:
    if config.task is not Task.SEMANTIC or config.reweight == "none":
        return None
    weights = median_freq_weights(
        ((s.labels, s.valid) for s in dataset), model.config.num_classes
    )
    logger.info("Median-frequency class weights: %s", np.array2string(weights.weights, precision=3))
    return weights


def _check_run(model: Model, dataset: Sequence[Sample], config: TrainConfig) -> None:
    if model.config.task is not config.task:
        raise ConfigurationError(
            f"Training config is for '{config.task.value}' but the model predicts "
            f"'{model.config.task.value}'"
        )
    if not dataset:
        raise InputError("Cannot train on an empty dataset", field="dataset")


def _finish_step(
    model: Model,
    state: TrainState,
    config: TrainConfig,
    loss: Tensor,
    lr: float,
    scales,
    checkpoint_dir: Optional[PathLike],
) -> CurvePoint:
    value = loss.item()
    if not np.isfinite(value):
        raise TrainingError(f"Loss became {value}", step=state.step)
    loss.backward()
    sgd_update(model, state, lr, config.momentum, scales=scales, step=state.step)
    state.step += 1
    state.phase_step += 1
    point = (state.step, value, lr)
    state.curve.append(point)
    logger.debug("step %d phase %d loss %.6g lr %.3g", state.step, state.phase, value, lr)
    if state.step % config.log_every == 0:
        logger.info("step %d loss %.6g lr %.3g", state.step, value, lr)
    if checkpoint_dir is not None and config.checkpoint_every and state.step % config.checkpoint_every == 0:
        save_training_checkpoint(Path(checkpoint_dir) / f"step-{state.step}.ckpt", model, state)
    return point


def train_phase1(
    model: Model,
    dataset: Sequence[Sample],
    config: TrainConfig,
    state: Optional[TrainState] = None,
    checkpoint_dir: Optional[PathLike] = None,
    steps: Optional[int] = None,
) -> TrainResult:
    """Jointly train the scales up to 2 on whole images.

    A model without scale 3 trains all its scales here; scale-3 parameters are
    never touched.

    Args:
        model: Model to train in place.
        dataset: Training samples with the task's ground truth.
        config: Hyperparameters; ``phase1_steps`` steps are taken unless
            ``steps`` says otherwise.
        state: State to continue from; a fresh one seeded with ``config.seed``
            when omitted.
        checkpoint_dir: Where ``step-<n>.ckpt`` files go.

    Returns:
        TrainResult: Model, state and the curve of this call.

    Raises:
        ConfigurationError: If the config's task differs from the model's.
        InputError: If the dataset is empty or lacks ground truth.
        TrainingError: On a non-finite loss or gradient.
    """
    _check_run(model, dataset, config)
    state = state if state is not None else TrainState.fresh(config.seed)
    state.enter_phase(1)
    scales = tuple(s for s in model.config.scales if s <= 2)
    upto = 2 if 3 in model.config.scales else None
    preset = preset_for(config.task)
    weights = class_weights(model, dataset, config)
    steps = config.phase1_steps if steps is None else steps
    params = model.parameters()

    logger.info("Phase 1: %d steps over scales %s", steps, scales)
    started = time.perf_counter()
    curve = []
    for _ in range(steps):
        lr = lr_at_step(state.phase_step, config)
        batch = draw_batch(dataset, config, state.rng)
        zero_grads(params)
        output = forward_full(model, batch, Mode.TRAIN, state.rng, upto_scale=upto, scores=True)
        targets = targets_on_grid(model, batch, output.dims[2:])
        loss = preset.loss(output, targets, weights)
        curve.append(_finish_step(model, state, config, loss, lr, scales, checkpoint_dir))
    zero_grads(params)
    logger.info("Phase 1 done in %.1fs", time.perf_counter() - started)
    return TrainResult(model, state, curve)


def train_phase2(
    model: Model,
    dataset: Sequence[Sample],
    config: TrainConfig,
    state: Optional[TrainState] = None,
    checkpoint_dir: Optional[PathLike] = None,
    steps: Optional[int] = None,
) -> TrainResult:
    """Train scale 3 with scales 1 and 2 frozen.

    Each step evaluates scales 1 and 2 in eval mode on the batch, draws a crop
    origin and trains scale 3 (entry convolutions included) on that window of
    its grid, or on the whole grid when ``config.phase2_crop`` is False.

    Raises:
        ConfigurationError: If the model has no scale 3, the tasks differ or
            the crop is larger than the scale-3 grid.
        InputError: If the dataset is empty.
        TrainingError: On a non-finite loss or gradient.

    Side Effects:
        Only scale-3 parameters change.
    """
    _check_run(model, dataset, config)
    if 3 not in model.config.scales:
        raise ConfigurationError(f"Phase 2 needs scale 3, the model has {model.config.scales}")
    g3 = scale3_grid(model.config)
    crop = tuple(config.crop_size) if config.crop_size is not None else scale2_grid(model.config)
    if crop[0] > g3[0] or crop[1] > g3[1]:
        raise ConfigurationError(f"Crop {crop} is larger than the {g3} scale-3 grid", "crop_size")
    state = state if state is not None else TrainState.fresh(config.seed)
    state.enter_phase(2)
    preset = preset_for(config.task)
    weights = class_weights(model, dataset, config)
    steps = config.phase2_steps if steps is None else steps
    params = model.parameters()

    logger.info(
        "Phase 2: %d steps on %s windows of the %s grid", steps, "x".join(map(str, crop)), g3
    )
    started = time.perf_counter()
    curve = []
    for _ in range(steps):
        lr = lr_at_step(state.phase_step, config)
        batch = draw_batch(dataset, config, state.rng)
        zero_grads(params)
        top = int(state.rng.integers(0, g3[0] - crop[0] + 1))
        left = int(state.rng.integers(0, g3[1] - crop[1] + 1))
        targets = targets_on_grid(model, batch, g3)
        if config.phase2_crop:
            features = scale2_features(model, batch)
            output = forward_scale3_crop(model, batch, features, (top, left), crop, scores=True)
            targets = targets.map(lambda a: a[..., top : top + crop[0], left : left + crop[1]])
        else:
            output = forward_full(model, batch, Mode.EVAL, scores=True)
        loss = preset.loss(output, targets, weights)
        curve.append(_finish_step(model, state, config, loss, lr, (3,), checkpoint_dir))
    zero_grads(params)
    logger.info("Phase 2 done in %.1fs", time.perf_counter() - started)
    return TrainResult(model, state, curve)


def train(
    model: Model,
    dataset: Sequence[Sample],
    config: TrainConfig,
    checkpoint_dir: Optional[PathLike] = None,
) -> TrainResult:
    """Phase 1, then phase 2 when the model has scale 3."""
    result = train_phase1(model, dataset, config, checkpoint_dir=checkpoint_dir)
    if 3 in model.config.scales and config.phase2_steps:
        second = train_phase2(model, dataset, config, result.state, checkpoint_dir)
        return TrainResult(model, second.state, result.curve + second.curve)
    return result


def batch_loss(model: Model, samples: Sequence[Sample], weights: Optional[ClassWeights] = None) -> Tensor:
    """Eval-mode loss of ``samples`` at the model's deepest grid."""
    output = forward_full(model, samples, Mode.EVAL, scores=True)
    targets = targets_on_grid(model, samples, output.dims[2:])
    return preset_for(model.config.task).loss(output, targets, weights)


def save_training_checkpoint(path: PathLike, model: Model, state: TrainState) -> None:
    write_checkpoint(path, state.to_checkpoint(model))


def load_training_checkpoint(path: PathLike) -> Tuple[Model, TrainState]:
    checkpoint = read_checkpoint(path)
    return Model.from_checkpoint(checkpoint), TrainState.from_checkpoint(checkpoint)


def write_loss_curve(path: PathLike, curve: Sequence[CurvePoint]) -> None:
    """``step,loss,lr`` CSV with exact float text."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss", "lr"])
        for step, loss, lr in curve:
            writer.writerow([int(step), repr(float(loss)), repr(float(lr))])


def read_loss_curve(path: PathLike) -> List[CurvePoint]:
    with Path(path).open(newline="") as handle:
        return [
            (int(row["step"]), float(row["loss"]), float(row["lr"])) for row in csv.DictReader(handle)
        ]
