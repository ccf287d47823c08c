"""Declarative description of the three-scale network.

A :class:`ModelConfig` lists every layer of the coarse stack (scale 1) and of
the two refinement stacks (scales 2 and 3) as :class:`LayerSpec` rows. The
presets reproduce the published layer table at 320x240 (``canonical_config``),
a desk-scale 64x48 variant at 1/8 width (``desk_config``) and an 8x6 model
small enough for composed gradient checks (``tiny_config``).

Spatial alignment convention: scale-1 features come out of layer 1.7 on a grid
of ``ceil(scale-2 grid / 4)`` cells, are upsampled by 4 and centre-cropped to
the scale-2 grid; the scale-2 prediction is upsampled by 2 and centre-cropped
to the scale-3 grid.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import math

from ..errors import ConfigurationError
from ..project_types import ChannelShape, Modality, Size2D, Task
from ..tensor.ops import conv_output_size, pool_output_size

CONV = "conv"
FULL = "full"

ALLOWED_SCALE_SETS = ((1,), (2,), (1, 2), (1, 2, 3))

BRANCH_SEPARATOR = "/"


@dataclass
class LayerSpec:
    """One row of the layer table.

    Attributes:
        name: Layer name, ``"1.1"`` to ``"3.4"``.
        kind: ``"conv"`` or ``"full"``.
        out_channels: Filters (conv) or units (full) at width multiplier 1.
            For layer 1.7 this is the number of feature channels per grid cell.
        kernel: Square kernel size (conv only).
        stride: Convolution stride.
        pad: Zero padding on every side.
        pool: Max-pool window applied after the nonlinearity, 0 for none.
        pool_stride: Max-pool stride.
        lr_multiplier: Learning-rate multiplier relative to the global rate.
        widen: False for head layers whose width never follows the multiplier.
    """

    name: str
    kind: str = CONV
    out_channels: int = 64
    kernel: int = 3
    stride: int = 1
    pad: int = 0
    pool: int = 0
    pool_stride: int = 0
    lr_multiplier: float = 1.0
    widen: bool = True

    def __post_init__(self):
        if self.kind not in (CONV, FULL):
            raise ConfigurationError(f"Unknown layer kind '{self.kind}'", layer=self.name)
        if self.out_channels < 1 or self.kernel < 1 or self.stride < 1 or self.pad < 0:
            raise ConfigurationError(
                "Layer channels, kernel and stride must be positive and padding "
                "nonnegative",
                layer=self.name,
            )
        if self.pool and self.pool_stride < 1:
            raise ConfigurationError("Pooling needs a positive stride", layer=self.name)
        if self.lr_multiplier < 0:
            raise ConfigurationError("Learning-rate multiplier must be >= 0", layer=self.name)

    def channels(self, width_multiplier: float) -> int:
        """Output channels after applying the width multiplier."""
        if not self.widen:
            return self.out_channels
        return max(1, int(round(self.out_channels * width_multiplier)))

    def output_size(self, height: int, width: int) -> Size2D:
        """Spatial size after the convolution and the optional pool.

        Raises:
            ConfigurationError: If any stage collapses to zero pixels.
        """
        h = conv_output_size(height, self.kernel, self.stride, self.pad)
        w = conv_output_size(width, self.kernel, self.stride, self.pad)
        if h < 1 or w < 1:
            raise ConfigurationError(
                f"{height}x{width} input is too small for a {self.kernel}x{self.kernel} "
                f"kernel with pad {self.pad}",
                layer=self.name,
            )
        if self.pool:
            if self.pool > h or self.pool > w:
                raise ConfigurationError(
                    f"Pool window {self.pool} exceeds the {h}x{w} map", layer=self.name
                )
            h = pool_output_size(h, self.pool, self.pool_stride)
            w = pool_output_size(w, self.pool, self.pool_stride)
        return h, w

    def to_text(self) -> str:
        return (
            f"{self.kind} out={self.out_channels} kernel={self.kernel} "
            f"stride={self.stride} pad={self.pad} pool={self.pool} "
            f"pool_stride={self.pool_stride} lr={self.lr_multiplier!r} "
            f"widen={int(self.widen)}"
        )

    @classmethod
    def from_text(cls, name: str, text: str) -> "LayerSpec":
        kind, *pairs = text.split()
        fields = dict(pair.split("=", 1) for pair in pairs)
        try:
            return cls(
                name=name,
                kind=kind,
                out_channels=int(fields["out"]),
                kernel=int(fields["kernel"]),
                stride=int(fields["stride"]),
                pad=int(fields["pad"]),
                pool=int(fields["pool"]),
                pool_stride=int(fields["pool_stride"]),
                lr_multiplier=float(fields["lr"]),
                widen=bool(int(fields["widen"])),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"Malformed layer description '{text}'", layer=name) from exc


def base_layer_name(name: str) -> str:
    """Strip the task-branch prefix and modality suffix: ``"depth/2.1.rgb"`` -> ``"2.1"``."""
    name = name.rsplit(BRANCH_SEPARATOR, 1)[-1]
    return ".".join(name.split(".")[:2])


def scale_of(name: str) -> int:
    """Scale index (1, 2 or 3) of a layer or parameter name."""
    return int(base_layer_name(name).split(".")[0])


@dataclass
class ModelConfig:
    """Everything needed to instantiate a :class:`~densepred.model.network.Model`.

    Attributes:
        input_size: ``(height, width)`` of input images.
        task: Prediction task.
        num_classes: Class count K for the semantic task.
        scales: Active scales; one of ``(1,)``, ``(2,)``, ``(1, 2)``, ``(1, 2, 3)``.
        width_multiplier: Channel shrink applied to every widened layer.
        border: ``(rows, cols)`` trimmed from each side before any scale runs.
        coarse_stack: Layers 1.1 to 1.5 (conv) and 1.6, 1.7 (full).
        scale2_layers: Layer 2.1 (entry), 2.2 to 2.4 and the 2.5 head.
        scale3_layers: Layer 3.1 (entry), 3.2, 3.3 and the 3.4 head.
        input_modalities: Maps the refinement scales read from the sample.
        modality_filters: Entry filters per modality when several are used.
        per_layer_lr: Learning-rate multiplier overrides by layer name.
        dropout_rate_16: Dropout after layer 1.6 during training.
        seed: Seed for parameter initialisation.
    """

    input_size: Size2D
    task: Task
    coarse_stack: List[LayerSpec]
    scale2_layers: List[LayerSpec]
    scale3_layers: List[LayerSpec]
    num_classes: int = 0
    scales: Tuple[int, ...] = (1, 2, 3)
    width_multiplier: float = 1.0
    border: Size2D = (0, 0)
    input_modalities: Tuple[Modality, ...] = (Modality.RGB,)
    modality_filters: int = 32
    per_layer_lr: Dict[str, float] = field(default_factory=dict)
    dropout_rate_16: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.task = Task.parse(self.task)
        self.scales = tuple(sorted(set(int(s) for s in self.scales)))
        self.input_modalities = tuple(Modality(m) for m in self.input_modalities)
        self.input_size = tuple(int(v) for v in self.input_size)
        self.border = tuple(int(v) for v in self.border)
        self.validate()

    def validate(self) -> None:
        """Check the structural invariants.

        Raises:
            ConfigurationError: On an unsupported scale set, task/class mismatch,
                malformed stacks or an out-of-range dropout rate.
        """
        if self.scales not in ALLOWED_SCALE_SETS:
            raise ConfigurationError(
                f"Scale set {self.scales} is not supported; scale 3 requires scale 2 "
                "and scale 2 requires scale 1 unless it runs alone"
            )
        if self.task is Task.SEMANTIC and self.num_classes < 2:
            raise ConfigurationError("The semantic task needs num_classes >= 2")
        if self.task is Task.DEPTH_NORMALS and 2 not in self.scales:
            raise ConfigurationError("The shared-trunk task needs scale 2")
        if self.width_multiplier <= 0:
            raise ConfigurationError("width_multiplier must be positive")
        if not 0.0 <= self.dropout_rate_16 < 1.0:
            raise ConfigurationError("dropout_rate_16 must lie in [0, 1)", layer="1.6")
        if not self.input_modalities:
            raise ConfigurationError("At least one input modality is required")
        if len(set(self.input_modalities)) != len(self.input_modalities):
            raise ConfigurationError("Input modalities must be distinct")
        if min(self.border) < 0:
            raise ConfigurationError("Border must be nonnegative")
        kinds = [layer.kind for layer in self.coarse_stack]
        if kinds != [CONV] * 5 + [FULL] * 2:
            raise ConfigurationError(
                "The coarse stack must hold five conv layers followed by two full layers"
            )
        for stack, count in ((self.scale2_layers, 5), (self.scale3_layers, 4)):
            if len(stack) != count or any(layer.kind != CONV for layer in stack):
                raise ConfigurationError(
                    f"Refinement stacks need {count} conv layers",
                    layer=stack[0].name if stack else None,
                )

    @property
    def output_channels(self) -> int:
        return self.task.output_channels(self.num_classes)

    @property
    def valid_size(self) -> Size2D:
        """Input size after trimming the border."""
        return (
            self.input_size[0] - 2 * self.border[0],
            self.input_size[1] - 2 * self.border[1],
        )

    @property
    def hidden_units(self) -> int:
        return self.coarse_stack[5].channels(self.width_multiplier)

    @property
    def coarse_features(self) -> int:
        return self.coarse_stack[6].channels(self.width_multiplier)

    @property
    def deepest_scale(self) -> int:
        return self.scales[-1]

    def layers(self) -> Iterable[LayerSpec]:
        yield from self.coarse_stack
        yield from self.scale2_layers
        yield from self.scale3_layers

    def layer(self, name: str) -> LayerSpec:
        """The layer row for a (possibly branch-prefixed) layer name."""
        base = base_layer_name(name)
        for spec in self.layers():
            if spec.name == base:
                return spec
        raise ConfigurationError("Unknown layer", layer=name)

    def lr_multiplier(self, name: str) -> float:
        """Multiplier for a layer; overrides match the full name first, then the base."""
        layer = name.rsplit(".", 1)[0] if name.endswith((".weight", ".bias")) else name
        for key in (layer, base_layer_name(layer)):
            if key in self.per_layer_lr:
                return self.per_layer_lr[key]
        return self.layer(layer).lr_multiplier

    def branches(self) -> List[Tuple[str, Task]]:
        """``(prefix, task)`` for every refinement branch."""
        if self.task is Task.DEPTH_NORMALS:
            return [("depth", Task.DEPTH), ("normals", Task.NORMALS)]
        return [("", self.task)]

    def branch_channels(self, task: Task) -> int:
        return task.output_channels(self.num_classes)

    def entry_names(self, scale: int) -> List[Tuple[str, Optional[Modality], int]]:
        """Entry layers of a refinement scale as ``(name, modality, channels)``.

        An RGB-only model has a single entry layer with the table's filter
        count; several modalities each get their own narrower entry layer.
        """
        spec = (self.scale2_layers if scale == 2 else self.scale3_layers)[0]
        if self.input_modalities == (Modality.RGB,):
            return [(spec.name, Modality.RGB, spec.channels(self.width_multiplier))]
        width = max(1, int(round(self.modality_filters * self.width_multiplier)))
        return [(f"{spec.name}.{m.value}", m, width) for m in self.input_modalities]

    def with_overrides(self, **changes) -> "ModelConfig":
        """A validated copy with some fields replaced."""
        return replace(self, **changes)

    def to_lines(self) -> List[str]:
        """``key=value`` lines that :meth:`from_lines` turns back into this config."""
        lines = [
            f"input_size={self.input_size[1]}x{self.input_size[0]}",
            f"task={self.task.value}",
            f"num_classes={self.num_classes}",
            f"scales={','.join(str(s) for s in self.scales)}",
            f"width_multiplier={self.width_multiplier!r}",
            f"border={self.border[0]},{self.border[1]}",
            f"input_modalities={','.join(m.value for m in self.input_modalities)}",
            f"modality_filters={self.modality_filters}",
            f"dropout_rate_16={self.dropout_rate_16!r}",
            f"seed={self.seed}",
        ]
        for name, value in sorted(self.per_layer_lr.items()):
            lines.append(f"lr.{name}={value!r}")
        for spec in self.layers():
            lines.append(f"layer.{spec.name}={spec.to_text()}")
        return lines

    @classmethod
    def from_lines(cls, lines: Sequence[str]) -> "ModelConfig":
        """Rebuild a config from :meth:`to_lines` output.

        Raises:
            ConfigurationError: On missing or malformed entries.
        """
        values: Dict[str, str] = {}
        per_layer_lr: Dict[str, float] = {}
        layers: List[LayerSpec] = []
        for line in lines:
            if not line.strip():
                continue
            key, _, value = line.partition("=")
            if key.startswith("layer."):
                layers.append(LayerSpec.from_text(key[len("layer."):], value))
            elif key.startswith("lr."):
                per_layer_lr[key[len("lr."):]] = float(value)
            else:
                values[key] = value
        try:
            width, height = (int(v) for v in values["input_size"].split("x"))
            return cls(
                input_size=(height, width),
                task=Task.parse(values["task"]),
                coarse_stack=[spec for spec in layers if spec.name.startswith("1.")],
                scale2_layers=[spec for spec in layers if spec.name.startswith("2.")],
                scale3_layers=[spec for spec in layers if spec.name.startswith("3.")],
                num_classes=int(values["num_classes"]),
                scales=tuple(int(s) for s in values["scales"].split(",")),
                width_multiplier=float(values["width_multiplier"]),
                border=tuple(int(v) for v in values["border"].split(",")),
                input_modalities=tuple(
                    Modality(m) for m in values["input_modalities"].split(",")
                ),
                modality_filters=int(values["modality_filters"]),
                per_layer_lr=per_layer_lr,
                dropout_rate_16=float(values["dropout_rate_16"]),
                seed=int(values["seed"]),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"Incomplete model description: {exc}") from exc


ShapePlan = Dict[str, ChannelShape]
"""Ordered layer name -> ``(channels, height, width)`` of its output."""


def scale2_grid(config: ModelConfig) -> Size2D:
    """Spatial size of the scale-2 feature grid (1/4 of the input)."""
    return config.scale2_layers[0].output_size(*config.valid_size)


def scale3_grid(config: ModelConfig) -> Size2D:
    """Spatial size of the scale-3 feature grid (1/2 of the input)."""
    return config.scale3_layers[0].output_size(*config.valid_size)


def coarse_grid(config: ModelConfig) -> Size2D:
    """Grid emitted by layer 1.7: a quarter of the scale-2 grid, rounded up."""
    h, w = scale2_grid(config)
    return math.ceil(h / 4), math.ceil(w / 4)


def output_grid(config: ModelConfig, upto_scale: Optional[int] = None) -> Size2D:
    """Spatial size of the prediction of the deepest active scale up to ``upto_scale``."""
    deepest = max(s for s in config.scales if upto_scale is None or s <= upto_scale)
    return scale3_grid(config) if deepest == 3 else scale2_grid(config)


def scale3_margin(config: ModelConfig) -> int:
    """Cells along a crop border that feel zero padding instead of real neighbours.

    Layers after the scale-3 entry are padded convolutions, so a crop and the
    full-plane pass agree everywhere except within the sum of their paddings.
    """
    return sum(spec.pad for spec in config.scale3_layers[1:])


def plan_shapes(config: ModelConfig) -> ShapePlan:
    """Walk the layer table and record each layer's output shape.

    Returns:
        ShapePlan: Ordered ``name -> (channels, height, width)``. Full layers are
        reported as ``(units, 1, 1)`` except layer 1.7, which reports its grid.

    Raises:
        ConfigurationError: Naming the first layer whose output would be empty or
            whose upsampled input does not cover the grid it must be cropped to.
    """
    plan: ShapePlan = {}
    h, w = config.valid_size
    if h < 1 or w < 1:
        raise ConfigurationError(
            f"Border {config.border} leaves no pixels of the {config.input_size} input",
            layer="input",
        )
    wm = config.width_multiplier
    g2 = scale2_grid(config)
    g3 = scale3_grid(config)

    coarse_channels = 0
    if 1 in config.scales:
        ch, ph, pw = 3, h, w
        for spec in config.coarse_stack[:5]:
            ph, pw = spec.output_size(ph, pw)
            ch = spec.channels(wm)
            plan[spec.name] = (ch, ph, pw)
        plan[config.coarse_stack[5].name] = (config.hidden_units, 1, 1)
        gh, gw = coarse_grid(config)
        head_only = config.scales == (1,)
        coarse_channels = config.output_channels if head_only else config.coarse_features
        plan[config.coarse_stack[6].name] = (coarse_channels, gh, gw)
        plan["1.upsample"] = (coarse_channels, *g2)

    if 2 in config.scales:
        if g2[0] * 2 < g3[0] or g2[1] * 2 < g3[1]:
            raise ConfigurationError(
                f"Upsampled scale-2 grid {g2} does not cover the scale-3 grid {g3}",
                layer=config.scale3_layers[0].name,
            )
        for prefix, task in config.branches():
            _plan_refinement(
                plan, config, 2, prefix, config.branch_channels(task), coarse_channels, g2
            )
            if 3 in config.scales:
                _plan_refinement(
                    plan,
                    config,
                    3,
                    prefix,
                    config.branch_channels(task),
                    config.branch_channels(task),
                    g3,
                )
    return plan


def _plan_refinement(
    plan: ShapePlan,
    config: ModelConfig,
    scale: int,
    prefix: str,
    head_channels: int,
    previous_channels: int,
    grid: Size2D,
) -> None:
    stack = config.scale2_layers if scale == 2 else config.scale3_layers
    qualify = (lambda n: f"{prefix}{BRANCH_SEPARATOR}{n}") if prefix else (lambda n: n)
    channels = previous_channels
    for name, _, width in config.entry_names(scale):
        plan[qualify(name)] = (width, *grid)
        channels += width
    for spec in stack[1:-1]:
        size = spec.output_size(*grid)
        if size != grid:
            raise ConfigurationError(
                f"Refinement layers must preserve the {grid} grid, got {size}",
                layer=qualify(spec.name),
            )
        channels = spec.channels(config.width_multiplier)
        plan[qualify(spec.name)] = (channels, *grid)
    head = stack[-1]
    if head.output_size(*grid) != grid:
        raise ConfigurationError(
            f"The head must preserve the {grid} grid", layer=qualify(head.name)
        )
    plan[qualify(head.name)] = (head_channels, *grid)


def _coarse_stack(
    first: Tuple[int, int, int, int, int],
    second_pool: Tuple[int, int],
    fifth_pool: Tuple[int, int],
    small_kernels: bool = False,
    hidden_units: int = 4096,
) -> List[LayerSpec]:
    k1, s1, p1, pool1, pool1_stride = first
    k2, p2 = (3, 1) if small_kernels else (5, 2)
    return [
        LayerSpec("1.1", CONV, 96, k1, s1, p1, pool1, pool1_stride),
        LayerSpec("1.2", CONV, 256, k2, 1, p2, *second_pool),
        LayerSpec("1.3", CONV, 384, 3, 1, 1),
        LayerSpec("1.4", CONV, 384, 3, 1, 1),
        LayerSpec("1.5", CONV, 256, 3, 1, 1, *fifth_pool),
        LayerSpec("1.6", FULL, hidden_units),
        LayerSpec("1.7", FULL, 64),
    ]


def _refinement_stacks(
    entry2: Tuple[int, int, int, int, int],
    entry3: Tuple[int, int, int, int, int],
    kernel: int = 5,
) -> Tuple[List[LayerSpec], List[LayerSpec]]:
    pad = kernel // 2
    k, s, p, pool, pool_stride = entry2
    scale2 = [
        LayerSpec("2.1", CONV, 96, k, s, p, pool, pool_stride),
        LayerSpec("2.2", CONV, 64, kernel, 1, pad, lr_multiplier=10.0),
        LayerSpec("2.3", CONV, 64, kernel, 1, pad, lr_multiplier=10.0),
        LayerSpec("2.4", CONV, 64, kernel, 1, pad, lr_multiplier=10.0),
        LayerSpec("2.5", CONV, 1, kernel, 1, pad, widen=False),
    ]
    k, s, p, pool, pool_stride = entry3
    scale3 = [
        LayerSpec("3.1", CONV, 96, k, s, p, pool, pool_stride),
        LayerSpec("3.2", CONV, 64, kernel, 1, pad, lr_multiplier=10.0),
        LayerSpec("3.3", CONV, 64, kernel, 1, pad, lr_multiplier=10.0),
        LayerSpec("3.4", CONV, 1, kernel, 1, pad, widen=False),
    ]
    return scale2, scale3


def canonical_config(task="depth", num_classes: int = 0, **overrides) -> ModelConfig:
    """The published layer table at 320x240 input.

    A 6-row, 8-column border leaves the 304x228 valid region on which the
    unpadded first layers produce 37x27, 18x13 and 8x6 maps, the 19x14 coarse
    grid, the 74x55 scale-2 grid and the 147x109 output.
    """
    from ..tasks import preset_for

    coarse = _coarse_stack((11, 4, 0, 2, 2), (2, 2), (3, 2))
    scale2, scale3 = _refinement_stacks((9, 2, 0, 2, 2), (9, 2, 0, 2, 1))
    config = dict(
        input_size=(240, 320),
        task=task,
        num_classes=num_classes,
        coarse_stack=coarse,
        scale2_layers=scale2,
        scale3_layers=scale3,
        border=(6, 8),
    )
    config.update(preset_for(task).model_overrides())
    config.update(overrides)
    return ModelConfig(**config)


def desk_config(task="depth", num_classes: int = 0, **overrides) -> ModelConfig:
    """64x48 input at 1/8 width with the same /8 /16 /32 /4 /2 ratios."""
    from ..tasks import preset_for

    coarse = _coarse_stack((11, 4, 5, 2, 2), (2, 2), (2, 2))
    scale2, scale3 = _refinement_stacks((9, 2, 4, 2, 2), (9, 2, 4, 0, 0))
    config = dict(
        input_size=(48, 64),
        task=task,
        num_classes=num_classes,
        coarse_stack=coarse,
        scale2_layers=scale2,
        scale3_layers=scale3,
        width_multiplier=1 / 8,
    )
    config.update(preset_for(task).model_overrides())
    config.update(overrides)
    return ModelConfig(**config)


def tiny_config(task="depth", num_classes: int = 0, **overrides) -> ModelConfig:
    """8x6 input at 1/16 width with 3x3 kernels, for composed gradient checks."""
    from ..tasks import preset_for

    coarse = _coarse_stack(
        (3, 1, 1, 2, 2), (0, 0), (2, 2), small_kernels=True, hidden_units=256
    )
    scale2, scale3 = _refinement_stacks((3, 1, 1, 2, 2), (3, 1, 1, 0, 0), kernel=3)
    config = dict(
        input_size=(6, 8),
        task=task,
        num_classes=num_classes,
        coarse_stack=coarse,
        scale2_layers=scale2,
        scale3_layers=scale3,
        width_multiplier=1 / 16,
    )
    config.update(preset_for(task).model_overrides())
    config.update(overrides)
    return ModelConfig(**config)


PRESETS = {"canonical": canonical_config, "desk": desk_config, "tiny": tiny_config}
