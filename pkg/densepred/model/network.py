"""The three-scale network.

Scale 1 sees the whole RGB image through a strided convolution stack and two
full layers and emits a coarse feature grid. Scale 2 concatenates those
features with its own entry convolution(s) over the input and refines them at
1/4 resolution. Scale 3 does the same with the upsampled scale-2 prediction at
1/2 resolution. ReLU follows every layer except the heads; dropout follows
layer 1.6 in training mode.
"""

from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import hashlib
import logging

import numpy as np

from ..augment.resample import resize_bilinear
from ..data.checkpoint import Checkpoint
from ..data.sample import Prediction, Sample, as_sample_list
from ..errors import ConfigurationError, InputError
from ..project_types import Modality, Mode, Size2D, Task
from ..tensor.ops import (
    ConvSpec,
    center_crop,
    concat_channels,
    conv2d,
    crop,
    dropout,
    flatten,
    l2_normalize_pixels,
    linear,
    maxpool,
    relu,
    reshape,
    select_channels,
    softmax_channels,
    upsample_bilinear,
)
from ..tensor.tensor import Tensor, parameter
from .config import (
    BRANCH_SEPARATOR,
    LayerSpec,
    ModelConfig,
    ShapePlan,
    plan_shapes,
    scale3_grid,
    scale_of,
)

MODEL_PREFIX = "model."
PARAM_PREFIX = "param/"


class Model:
    """Instantiated parameters of a :class:`ModelConfig`.

    Attributes:
        config: The configuration the model was built from.
        plan: Output shape of every layer.
        convs: Convolution layers by (branch-qualified) name.
        fulls: ``(weight, bias)`` of the full layers 1.6 and 1.7.
    """

    def __init__(
        self,
        config: ModelConfig,
        plan: ShapePlan,
        convs: Dict[str, ConvSpec],
        fulls: Dict[str, Tuple[Tensor, Tensor]],
    ):
        self.config = config
        self.plan = plan
        self.convs = convs
        self.fulls = fulls
        self._logger = logging.getLogger("DensePred.Model")

    def named_parameters(self, scales: Optional[Iterable[int]] = None) -> List[Tuple[str, Tensor]]:
        """``(name, tensor)`` pairs in layer order, optionally limited to some scales."""
        wanted = None if scales is None else set(scales)
        pairs = []
        for layer in self.plan:
            if layer in self.convs:
                weight, bias = self.convs[layer].weight, self.convs[layer].bias
            elif layer in self.fulls:
                weight, bias = self.fulls[layer]
            else:
                continue
            if wanted is not None and scale_of(layer) not in wanted:
                continue
            pairs.append((weight.name, weight))
            pairs.append((bias.name, bias))
        return pairs

    def parameters(self, scales: Optional[Iterable[int]] = None) -> List[Tensor]:
        return [t for _, t in self.named_parameters(scales)]

    def layer_of(self, name: str) -> str:
        """Layer name of a parameter name (``"depth/2.2.weight"`` -> ``"depth/2.2"``)."""
        return name.rsplit(".", 1)[0]

    def lr_multiplier(self, name: str) -> float:
        return self.config.lr_multiplier(self.layer_of(name))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """Copy values into the parameters.

        Raises:
            ConfigurationError: On missing, unexpected or mis-shaped entries.
        """
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ConfigurationError(
                f"State does not match the model (missing {missing}, unexpected {unexpected})"
            )
        for name, tensor in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != tensor.dims:
                raise ConfigurationError(
                    f"Shape {value.shape} does not match {tensor.dims}",
                    layer=self.layer_of(name),
                )
            tensor.data[...] = value

    def digest(self, scales: Optional[Iterable[int]] = None) -> str:
        """SHA-256 over parameter names and bytes."""
        sha = hashlib.sha256()
        for name, tensor in self.named_parameters(scales):
            sha.update(name.encode())
            sha.update(tensor.data.tobytes())
        return sha.hexdigest()

    def forward(self, samples, mode: Mode = Mode.EVAL, rng=None, **kwargs) -> Tensor:
        return forward_full(self, samples, mode, rng, **kwargs)

    def predict(self, samples: Sequence[Sample]) -> List[Prediction]:
        """Eval-mode predictions upsampled to the input resolution.

        Maps are resized bilinearly over the valid region and extended into the
        border by edge replication. Log-depth is exponentiated after resizing and
        normals are renormalised.
        """
        samples = as_sample_list(samples)
        output = forward_full(self, samples, Mode.EVAL).data
        predictions = []
        for i in range(len(samples)):
            prediction = Prediction()
            channel = 0
            for _, task in self.config.branches():
                width = self.config.branch_channels(task)
                full = self._to_input_grid(output[i, channel : channel + width])
                channel += width
                if task is Task.DEPTH:
                    prediction.depth = np.exp(full[0])
                elif task is Task.NORMALS:
                    norm = np.linalg.norm(full, axis=0, keepdims=True)
                    prediction.normals = full / np.maximum(norm, 1e-12)
                else:
                    prediction.probabilities = full
            predictions.append(prediction)
        return predictions

    def _to_input_grid(self, maps: np.ndarray) -> np.ndarray:
        br, bc = self.config.border
        resized = resize_bilinear(maps, self.config.valid_size)
        if br or bc:
            resized = np.pad(resized, ((0, 0), (br, br), (bc, bc)), mode="edge")
        return resized

    def to_checkpoint(self, entries: Optional[Dict[str, str]] = None) -> Checkpoint:
        """Checkpoint holding the config text and every parameter."""
        text = {}
        for line in self.config.to_lines():
            key, _, value = line.partition("=")
            text[MODEL_PREFIX + key] = value
        text.update(entries or {})
        tensors = {PARAM_PREFIX + name: t.data for name, t in self.named_parameters()}
        return Checkpoint(text, tensors)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "Model":
        lines = [
            f"{key[len(MODEL_PREFIX):]}={value}"
            for key, value in checkpoint.entries.items()
            if key.startswith(MODEL_PREFIX)
        ]
        model = build_model(ModelConfig.from_lines(lines))
        model.load_state_dict(
            {
                key[len(PARAM_PREFIX):]: value
                for key, value in checkpoint.tensors.items()
                if key.startswith(PARAM_PREFIX)
            }
        )
        return model

    def __repr__(self) -> str:
        count = sum(t.data.size for t in self.parameters())
        return (
            f"Model(task={self.config.task.value}, scales={self.config.scales}, "
            f"parameters={count})"
        )


def _qualify(prefix: str, name: str) -> str:
    return f"{prefix}{BRANCH_SEPARATOR}{name}" if prefix else name


def _uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, name: str) -> Tensor:
    bound = np.sqrt(3.0 / fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape), name=name)


def _make_conv(
    rng: np.random.Generator, name: str, spec: LayerSpec, in_channels: int, out_channels: int
) -> ConvSpec:
    k = spec.kernel
    weight = _uniform(rng, (out_channels, in_channels, k, k), in_channels * k * k, f"{name}.weight")
    bias = parameter(np.zeros(out_channels), name=f"{name}.bias")
    return ConvSpec(name, in_channels, out_channels, k, k, spec.stride, spec.pad, weight, bias)


def build_model(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> Model:
    """Instantiate every parameter of ``config``.

    Weights are drawn from ``uniform(-a, a)`` with ``a = sqrt(3 / fan_in)``;
    biases start at zero. Parameters are created in layer order, so a seed
    fixes the whole model.

    Args:
        config: The model description.
        rng: Generator for the weights; defaults to one seeded with ``config.seed``.

    Returns:
        Model: The initialised model.

    Raises:
        ConfigurationError: If the spatial plan is inconsistent; the message
            names the offending layer.
    """
    plan = plan_shapes(config)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    convs: Dict[str, ConvSpec] = {}
    fulls: Dict[str, Tuple[Tensor, Tensor]] = {}

    coarse_channels = 0
    if 1 in config.scales:
        channels = Modality.RGB.channels
        for spec in config.coarse_stack[:5]:
            out_channels = plan[spec.name][0]
            convs[spec.name] = _make_conv(rng, spec.name, spec, channels, out_channels)
            channels = out_channels
        c5, h5, w5 = plan[config.coarse_stack[4].name]
        features = c5 * h5 * w5
        for spec in config.coarse_stack[5:]:
            c, h, w = plan[spec.name]
            units = c * h * w
            weight = _uniform(rng, (units, features), features, f"{spec.name}.weight")
            bias = parameter(np.zeros(units), name=f"{spec.name}.bias")
            fulls[spec.name] = (weight, bias)
            features = units
        coarse_channels = plan[config.coarse_stack[6].name][0]

    if 2 in config.scales:
        for prefix, task in config.branches():
            head = config.branch_channels(task)
            for scale, previous in ((2, coarse_channels), (3, head)):
                if scale not in config.scales:
                    continue
                stack = config.scale2_layers if scale == 2 else config.scale3_layers
                channels = previous
                for name, modality, width in config.entry_names(scale):
                    qualified = _qualify(prefix, name)
                    convs[qualified] = _make_conv(
                        rng, qualified, stack[0], modality.channels, width
                    )
                    channels += width
                for spec in stack[1:]:
                    qualified = _qualify(prefix, spec.name)
                    out_channels = plan[qualified][0]
                    convs[qualified] = _make_conv(rng, qualified, spec, channels, out_channels)
                    channels = out_channels

    model = Model(config, plan, convs, fulls)
    logger = logging.getLogger("DensePred.Model")
    logger.info("Built %r", model)
    for name, shape in plan.items():
        logger.info("  %-16s %s", name, "x".join(str(v) for v in shape))
    return model


def encode_inputs(config: ModelConfig, samples: Sequence[Sample]) -> Dict[Modality, np.ndarray]:
    """Network inputs of every modality the model reads, border trimmed.

    RGB is centred as ``rgb - 0.5``; depth enters as log-depth and normals as
    raw vectors, both 0 at invalid pixels.

    Raises:
        InputError: If a sample has the wrong size or lacks a modality.
    """
    needed = list(config.input_modalities)
    if 1 in config.scales and Modality.RGB not in needed:
        needed.insert(0, Modality.RGB)
    br, bc = config.border
    h, w = config.input_size
    encoded = {}
    for sample in samples:
        if tuple(sample.size) != (h, w):
            raise InputError(
                f"Sample size {tuple(sample.size)} does not match the model input {(h, w)}",
                field="rgb",
            )
    for modality in needed:
        maps = []
        for sample in samples:
            if modality is Modality.RGB:
                maps.append(sample.rgb - 0.5)
            elif modality is Modality.DEPTH:
                if sample.depth is None:
                    raise InputError("The model reads a depth input", field="depth")
                valid = sample.valid & (sample.depth > 0)
                logd = np.log(np.where(valid, sample.depth, 1.0))
                maps.append(np.where(valid, logd, 0.0)[None])
            else:
                if sample.normals is None:
                    raise InputError("The model reads a normals input", field="normals")
                maps.append(np.where(sample.valid[None], sample.normals, 0.0))
        stacked = np.stack(maps)
        encoded[modality] = stacked[:, :, br : h - br, bc : w - bc]
    return encoded


def _coarse(model: Model, rgb: Tensor, mode: Mode, rng) -> Tensor:
    config = model.config
    h = rgb
    for spec in config.coarse_stack[:5]:
        h = relu(conv2d(h, model.convs[spec.name]))
        if spec.pool:
            h = maxpool(h, spec.pool, spec.pool_stride, layer=spec.name)
    n = h.dims[0]
    h = flatten(h)
    weight, bias = model.fulls["1.6"]
    h = relu(linear(h, weight, bias, layer="1.6"))
    h = dropout(h, config.dropout_rate_16, rng, mode is Mode.TRAIN)
    weight, bias = model.fulls["1.7"]
    h = linear(h, weight, bias, layer="1.7")
    if config.scales != (1,):
        h = relu(h)
    h = reshape(h, (n,) + model.plan["1.7"])
    return center_crop(upsample_bilinear(h, 4), *model.plan["1.upsample"][1:])


def _entries(
    model: Model, scale: int, prefix: str, inputs: Dict[Modality, np.ndarray]
) -> List[Tensor]:
    spec = (model.config.scale2_layers if scale == 2 else model.config.scale3_layers)[0]
    parts = []
    for name, modality, _ in model.config.entry_names(scale):
        h = relu(conv2d(Tensor(inputs[modality]), model.convs[_qualify(prefix, name)]))
        if spec.pool:
            h = maxpool(h, spec.pool, spec.pool_stride, layer=_qualify(prefix, name))
        parts.append(h)
    return parts


def _refine(
    model: Model, scale: int, prefix: str, entries: List[Tensor], previous: Optional[Tensor]
) -> Tensor:
    stack = model.config.scale2_layers if scale == 2 else model.config.scale3_layers
    h = concat_channels(*entries, previous)
    for spec in stack[1:-1]:
        h = relu(conv2d(h, model.convs[_qualify(prefix, spec.name)]))
    return conv2d(h, model.convs[_qualify(prefix, stack[-1].name)])


def _finalize(task: Task, raw: Tensor, scores: bool) -> Tensor:
    if task is Task.NORMALS:
        return l2_normalize_pixels(raw)
    if task is Task.SEMANTIC and not scores:
        return softmax_channels(raw)
    return raw


def _run(
    model: Model, samples: Sequence[Sample], mode: Mode, rng, upto_scale: Optional[int]
) -> Dict[str, Tensor]:
    config = model.config
    active = [s for s in config.scales if upto_scale is None or s <= upto_scale]
    if not active or (active == [1] and config.scales != (1,)):
        raise ConfigurationError(
            f"upto_scale={upto_scale} leaves no prediction head among scales {config.scales}"
        )
    inputs = encode_inputs(config, samples)
    coarse = None
    if 1 in active:
        coarse = _coarse(model, Tensor(inputs[Modality.RGB]), mode, rng)
    if active == [1]:
        return {"": coarse}

    g3 = scale3_grid(config) if 3 in active else None
    outputs = {}
    for prefix, _ in config.branches():
        raw = _refine(model, 2, prefix, _entries(model, 2, prefix, inputs), coarse)
        if g3 is not None:
            previous = center_crop(upsample_bilinear(raw, 2), *g3)
            raw = _refine(model, 3, prefix, _entries(model, 3, prefix, inputs), previous)
        outputs[prefix] = raw
    return outputs


def forward_full(
    model: Model,
    samples,
    mode: Mode = Mode.EVAL,
    rng: Optional[np.random.Generator] = None,
    upto_scale: Optional[int] = None,
    scores: bool = False,
) -> Tensor:
    """Run every active scale (up to ``upto_scale``) over a batch of samples.

    Args:
        model: The network.
        samples: One sample or a sequence of same-size samples.
        mode: ``TRAIN`` enables dropout, which then needs ``rng``.
        rng: Generator for dropout masks.
        upto_scale: Stop after this scale (phase 1 stops at 2).
        scores: Return semantic class scores before the softmax.

    Returns:
        Tensor: ``(N, C, H, W)`` at the grid of the deepest scale that ran.
        Normals are unit length per pixel; semantic outputs are probabilities
        unless ``scores``; the shared-trunk task returns ``[log-depth, n]``.

    Raises:
        InputError: If a sample lacks a modality the model reads.
    """
    samples = as_sample_list(samples)
    outputs = _run(model, samples, mode, rng, upto_scale)
    return concat_channels(
        *[_finalize(task, outputs[prefix], scores) for prefix, task in model.config.branches()]
    )


def shared_trunk_forward(
    model: Model,
    samples,
    mode: Mode = Mode.EVAL,
    rng: Optional[np.random.Generator] = None,
    upto_scale: Optional[int] = None,
) -> Tuple[Tensor, Tensor]:
    """One scale-1 pass feeding separate depth and normals refinement stacks.

    Returns:
        tuple: ``(log-depth (N, 1, H, W), unit normals (N, 3, H, W))``.

    Raises:
        ConfigurationError: If the model is not a depth+normals model.
    """
    if model.config.task is not Task.DEPTH_NORMALS:
        raise ConfigurationError(
            f"shared_trunk_forward needs a depth+normals model, got {model.config.task.value}"
        )
    outputs = _run(model, as_sample_list(samples), mode, rng, upto_scale)
    return outputs["depth"], l2_normalize_pixels(outputs["normals"])


def scale2_features(model: Model, samples) -> Tensor:
    """Detached eval-mode scale-2 head output (all branches, raw) for phase 2."""
    outputs = _run(model, as_sample_list(samples), Mode.EVAL, None, 2)
    return concat_channels(*[outputs[p] for p, _ in model.config.branches()]).detach()


def _entry_window(
    model: Model,
    prefix: str,
    name: str,
    source: np.ndarray,
    origin: Tuple[int, int],
    size: Size2D,
) -> Tensor:
    spec = model.config.scale3_layers[0]
    conv = model.convs[_qualify(prefix, name)]
    window, stride = (spec.pool, spec.pool_stride) if spec.pool else (1, 1)
    s, k, p = spec.stride, spec.kernel, spec.pad
    (top, left), (height, width) = origin, size
    r0 = top * stride * s
    r1 = ((top + height - 1) * stride + window - 1) * s + k
    c0 = left * stride * s
    c1 = ((left + width - 1) * stride + window - 1) * s + k
    padded = np.pad(source, ((0, 0), (0, 0), (p, p), (p, p)))
    unpadded = ConvSpec(
        conv.name, conv.in_channels, conv.out_channels, k, k, s, 0, conv.weight, conv.bias
    )
    h = relu(conv2d(Tensor(padded[:, :, r0:r1, c0:c1]), unpadded))
    if spec.pool:
        h = maxpool(h, spec.pool, spec.pool_stride, layer=conv.name)
    return h


def forward_scale3_crop(
    model: Model,
    samples,
    scale2_out: Tensor,
    crop_origin: Tuple[int, int],
    crop_size: Optional[Size2D] = None,
    scores: bool = False,
) -> Tensor:
    """Run scale 3 on a window of its grid.

    The upsampled scale-2 output is cropped to the window, and the scale-3
    entry convolutions are evaluated exactly on the input rows and columns that
    feed the window. Results equal the matching window of :func:`forward_full`
    except within :func:`~densepred.model.config.scale3_margin` cells of a crop
    edge that is not an image edge.

    Args:
        model: A model with scale 3.
        samples: The samples ``scale2_out`` was computed from.
        scale2_out: Raw scale-2 output, e.g. from :func:`scale2_features`.
        crop_origin: ``(top, left)`` in scale-3 grid cells.
        crop_size: ``(height, width)``; the whole grid when omitted.
        scores: Return semantic scores before the softmax.

    Raises:
        ConfigurationError: If the model has no scale 3.
        InputError: If the window leaves the scale-3 grid.
    """
    config = model.config
    if 3 not in config.scales:
        raise ConfigurationError("forward_scale3_crop needs a model with scale 3")
    samples = as_sample_list(samples)
    g3 = scale3_grid(config)
    size = tuple(crop_size) if crop_size is not None else g3
    top, left = crop_origin
    if top < 0 or left < 0 or top + size[0] > g3[0] or left + size[1] > g3[1] or min(size) < 1:
        raise InputError(
            f"Crop {size} at {crop_origin} leaves the {g3} scale-3 grid", field="crop"
        )
    inputs = encode_inputs(config, samples)
    upsampled = center_crop(upsample_bilinear(scale2_out, 2), *g3)

    finals = []
    channel = 0
    for prefix, task in config.branches():
        width = config.branch_channels(task)
        previous = crop(select_channels(upsampled, channel, channel + width), top, left, *size)
        channel += width
        entries = [
            _entry_window(model, prefix, name, inputs[modality], (top, left), size)
            for name, modality, _ in config.entry_names(3)
        ]
        finals.append(_finalize(task, _refine(model, 3, prefix, entries, previous), scores))
    return concat_channels(*finals)
