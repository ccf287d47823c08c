from dataclasses import dataclass, field, replace
from typing import Optional

from ..augment.params import AugmentConfig
from ..errors import ConfigurationError, InputError
from ..project_types import Size2D, Task

DEFAULT_BASE_LR = 0.005
REWEIGHT_MODES = ("none", "median-freq")


@dataclass
class TrainConfig:
    """Hyperparameters of both training phases.

    Attributes:
        task: Task being trained; must match the model's.
        batch_size: Samples per SGD step.
        base_lr: Global learning rate before per-layer multipliers.
        momentum: Momentum coefficient; 0 gives plain SGD.
        lr_step_at: Phase-local step from which the rate is stepped down.
        lr_step_factor: Factor applied to ``base_lr`` from ``lr_step_at`` on.
        phase1_steps: Steps of joint scale 1 and 2 training.
        phase2_steps: Steps of scale-3 training with the rest frozen.
        crop_size: Phase-2 window in scale-3 grid cells; the scale-2 grid
            (a quarter of the scale-3 area) when None.
        phase2_crop: Train scale 3 on random windows; False runs it on the
            whole plane.
        checkpoint_every: Write a checkpoint every this many steps (0 disables).
        augment: Apply random augmentation to every drawn sample.
        augment_config: Ranges of the augmentation parameters.
        reweight: ``none`` or ``median-freq`` class balancing (semantic task).
        log_every: Steps between INFO progress lines.
        seed: Seed of the data-sampling generator.
    """

    task: Task = Task.DEPTH
    batch_size: int = 8
    base_lr: float = DEFAULT_BASE_LR
    momentum: float = 0.9
    lr_step_at: int = 1500
    lr_step_factor: float = 0.1
    phase1_steps: int = 2000
    phase2_steps: int = 1000
    crop_size: Optional[Size2D] = None
    phase2_crop: bool = True
    checkpoint_every: int = 0
    augment: bool = True
    augment_config: AugmentConfig = field(default_factory=AugmentConfig)
    reweight: str = "none"
    log_every: int = 50
    seed: int = 0

    def __post_init__(self):
        self.task = Task.parse(self.task)
        self.validate()

    def validate(self) -> None:
        """Raises ConfigurationError naming the first invalid field."""
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}", "batch_size")
        if self.base_lr < 0:
            raise ConfigurationError(f"base_lr must be >= 0, got {self.base_lr}", "base_lr")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}", "momentum")
        if self.lr_step_at < 0 or self.lr_step_factor <= 0:
            raise ConfigurationError("lr_step_at must be >= 0 and lr_step_factor > 0", "lr_step_at")
        if self.phase1_steps < 0 or self.phase2_steps < 0:
            raise ConfigurationError("Step counts must be >= 0", "phase1_steps")
        if self.crop_size is not None and min(self.crop_size) < 1:
            raise ConfigurationError(f"crop_size must be positive, got {self.crop_size}", "crop_size")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be >= 0", "checkpoint_every")
        if self.reweight not in REWEIGHT_MODES:
            raise ConfigurationError(
                f"reweight must be one of {REWEIGHT_MODES}, got '{self.reweight}'", "reweight"
            )
        if self.log_every < 1:
            raise ConfigurationError("log_every must be >= 1", "log_every")

    @classmethod
    def for_task(cls, task, **overrides) -> "TrainConfig":
        """Defaults with the task preset applied, then ``overrides``.

        The normals preset scales the default base learning rate by 10.
        """
        from ..tasks import preset_for

        preset = preset_for(task)
        config = cls(task=preset.task, base_lr=DEFAULT_BASE_LR * preset.base_lr_scale)
        return replace(config, **overrides) if overrides else config

    def lr_at_step(self, step: int) -> float:
        return lr_at_step(step, self)


def lr_at_step(step: int, config: TrainConfig) -> float:
    """Step schedule: ``base_lr`` before ``lr_step_at``, stepped down from it on.

    Raises:
        InputError: If ``step`` is negative.
    """
    if step < 0:
        raise InputError(f"step must be >= 0, got {step}", field="step")
    if step >= config.lr_step_at:
        return config.base_lr * config.lr_step_factor
    return config.base_lr
