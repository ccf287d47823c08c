"""Run configuration: ``section.key = value`` files merged with command-line flags.

Precedence, lowest first: dataclass defaults, task preset, config file,
command-line flags. :func:`resolve` turns a :class:`RunConfig` into the
library configuration objects and :func:`resolved_text` writes every effective
value back out, so ``<out>/config.txt`` replays the run with ``--config``.
"""

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

import os

from ..augment.params import AugmentConfig
from ..data.scene import SceneSpec
from ..errors import ConfigurationError, FormatError
from ..model.config import PRESETS, ModelConfig
from ..project_types import Modality, Task
from ..training.config import TrainConfig

OUTPUT_ROOT_ENV = "DENSEPRED_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"
SECTIONS = ("model", "train", "augment", "data", "run")


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got '{text}'")


def _size(text: str) -> Tuple[int, int]:
    """``WxH`` to ``(height, width)``."""
    width, height = (int(v) for v in text.lower().split("x"))
    return height, width


def _format_size(size) -> str:
    return f"{size[1]}x{size[0]}"


def _pair(text: str) -> Tuple[float, float]:
    low, high = (float(v) for v in text.split(","))
    return low, high


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _join(values) -> str:
    return ",".join(str(v) for v in values)


Parser = Callable[[str], Any]
Formatter = Callable[[Any], str]

# key -> (parser, formatter)
SCHEMA: Dict[str, Tuple[Parser, Formatter]] = {
    "model.preset": (str, str),
    "model.task": (Task.parse, lambda t: t.value),
    "model.classes": (int, str),
    "model.scales": (_ints, _join),
    "model.width": (float, repr),
    "model.inputs": (lambda t: tuple(Modality(v.strip()) for v in t.split(",")), lambda ms: _join(m.value for m in ms)),
    "model.seed": (int, str),
    "train.batch_size": (int, str),
    "train.base_lr": (float, repr),
    "train.momentum": (float, repr),
    "train.lr_step_at": (int, str),
    "train.lr_step_factor": (float, repr),
    "train.phase1_steps": (int, str),
    "train.phase2_steps": (int, str),
    "train.crop_size": (_size, _format_size),
    "train.phase2_crop": (_bool, lambda b: str(b).lower()),
    "train.checkpoint_every": (int, str),
    "train.augment": (_bool, lambda b: str(b).lower()),
    "train.reweight": (str, str),
    "train.log_every": (int, str),
    "train.seed": (int, str),
    "augment.scale_range": (_pair, _join),
    "augment.rotation_degrees": (float, repr),
    "augment.translation": (float, repr),
    "augment.color_range": (_pair, _join),
    "augment.contrast_range": (_pair, _join),
    "augment.flip_prob": (float, repr),
    "data.root": (str, str),
    "data.count": (int, str),
    "data.test_count": (int, str),
    "data.size": (_size, _format_size),
    "data.seed": (int, str),
    "data.classes": (int, str),
    "data.boxes": (lambda t: tuple(int(v) for v in _pair(t)), _join),
    "run.out": (str, str),
    "run.workers": (int, str),
}

TRAIN_KEYS = {
    "batch_size",
    "base_lr",
    "momentum",
    "lr_step_at",
    "lr_step_factor",
    "phase1_steps",
    "phase2_steps",
    "crop_size",
    "phase2_crop",
    "checkpoint_every",
    "augment",
    "reweight",
    "log_every",
    "seed",
}


@dataclass
class RunConfig:
    """Explicitly set values by ``section.key``; unset keys fall back to defaults.

    Attributes:
        values: Parsed values in the order they were set.
        sources: Where each value came from (``file:line`` or ``flag``).
    """

    values: Dict[str, Any] = field(default_factory=dict)
    sources: Dict[str, str] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def set(self, key: str, value: Any, source: str = "flag") -> None:
        """Set a parsed value or, for strings, parse it with the key's schema.

        Raises:
            ConfigurationError: On an unknown key or an unparsable value.
        """
        if key not in SCHEMA:
            raise ConfigurationError(f"Unknown configuration key (from {source})", layer=key)
        if isinstance(value, str) and SCHEMA[key][0] is not str:
            try:
                value = SCHEMA[key][0](value)
            except ValueError as exc:
                raise ConfigurationError(f"Bad value for {key} (from {source}): {exc}", layer=key) from exc
        self.values[key] = value
        self.sources[key] = source

    def update(self, other: "RunConfig") -> "RunConfig":
        """Values of ``other`` override these; returns self."""
        for key, value in other.values.items():
            self.set(key, value, other.sources.get(key, "flag"))
        return self

    def section(self, name: str) -> Dict[str, Any]:
        prefix = name + "."
        return {key[len(prefix):]: value for key, value in self.values.items() if key.startswith(prefix)}

    def to_text(self) -> str:
        lines = []
        for key, value in self.values.items():
            lines.append(f"{key} = {SCHEMA[key][1](value)}")
        return "\n".join(lines) + "\n"


def parse_run_config(text: str, path: Optional[str] = None) -> RunConfig:
    """Parse ``section.key = value`` lines; ``#`` starts a comment.

    Raises:
        FormatError: On a line without ``=``.
        ConfigurationError: On an unknown key or bad value, naming the line.
    """
    config = RunConfig()
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"Expected 'section.key = value', got '{raw}'", path=path, offset=number)
        config.set(key.strip(), value.strip(), f"{path or '<text>'}:{number}")
    return config


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    return parse_run_config(path.read_text(), str(path))


def output_root() -> Path:
    """``$DENSEPRED_OUTPUT_ROOT`` or ``./runs``."""
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


def output_dir(run: RunConfig, command: str) -> Path:
    out = run.get("run.out")
    return Path(out) if out else output_root() / command


def model_config(run: RunConfig) -> ModelConfig:
    """Preset (default ``desk``) with the ``model.*`` overrides applied.

    Raises:
        ConfigurationError: On an unknown preset or an invalid combination.
    """
    preset = run.get("model.preset", "desk")
    if preset not in PRESETS:
        raise ConfigurationError(f"Unknown preset '{preset}', expected one of {sorted(PRESETS)}", layer="model.preset")
    overrides = {}
    if run.get("model.scales") is not None:
        overrides["scales"] = run.get("model.scales")
    if run.get("model.width") is not None:
        overrides["width_multiplier"] = run.get("model.width")
    if run.get("model.inputs") is not None:
        overrides["input_modalities"] = run.get("model.inputs")
    if run.get("model.seed") is not None:
        overrides["seed"] = run.get("model.seed")
    task = run.get("model.task", Task.DEPTH)
    classes = run.get("model.classes", run.get("data.classes", 5) if task is Task.SEMANTIC else 0)
    return PRESETS[preset](task, num_classes=classes, **overrides)


def augment_config(run: RunConfig) -> AugmentConfig:
    return AugmentConfig(**run.section("augment"))


def train_config(run: RunConfig) -> TrainConfig:
    """Task preset defaults with the ``train.*`` and ``augment.*`` overrides applied."""
    overrides = {key: value for key, value in run.section("train").items() if key in TRAIN_KEYS}
    overrides["augment_config"] = augment_config(run)
    return TrainConfig.for_task(run.get("model.task", Task.DEPTH), **overrides)


def scene_spec(run: RunConfig, size=None) -> SceneSpec:
    """Scene distribution; the image size defaults to the model's input size."""
    options = {}
    if run.get("data.seed") is not None:
        options["seed"] = run.get("data.seed")
    if run.get("data.boxes") is not None:
        options["box_count"] = run.get("data.boxes")
    if run.get("data.classes") is not None:
        options["num_classes"] = run.get("data.classes")
    options["size"] = run.get("data.size") or size or model_config(run).input_size
    return SceneSpec(**options)


def resolved_text(run: RunConfig, model: Optional[ModelConfig] = None, train: Optional[TrainConfig] = None) -> str:
    """Every effective value of the run, in config-file syntax."""
    resolved = RunConfig()
    if model is not None:
        resolved.set("model.preset", run.get("model.preset", "desk"))
        resolved.set("model.task", model.task)
        resolved.set("model.classes", model.num_classes)
        resolved.set("model.scales", model.scales)
        resolved.set("model.width", model.width_multiplier)
        resolved.set("model.inputs", model.input_modalities)
        resolved.set("model.seed", model.seed)
    if train is not None:
        for f in fields(TrainConfig):
            if f.name in TRAIN_KEYS and getattr(train, f.name) is not None:
                resolved.set(f"train.{f.name}", getattr(train, f.name))
        for f in fields(AugmentConfig):
            resolved.set(f"augment.{f.name}", getattr(train.augment_config, f.name))
    for key, value in run.values.items():
        if key.split(".", 1)[0] in ("data", "run") or key not in resolved.values:
            resolved.set(key, value)
    return resolved.to_text()
