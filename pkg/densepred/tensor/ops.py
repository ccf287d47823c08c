"""Differentiable dense-tensor primitives.

Every function takes and returns :class:`~densepred.tensor.tensor.Tensor`
values and records an exact backward map. Convolution follows the
cross-correlation convention (kernels are not flipped). Feature maps are laid
out as ``(batch, channels, height, width)``.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, InputError
from .tensor import Tensor


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    """Closed-form output length of a strided, padded convolution."""
    return (size + 2 * pad - kernel) // stride + 1


def pool_output_size(size: int, window: int, stride: int) -> int:
    """Closed-form output length of an unpadded pooling window."""
    return (size - window) // stride + 1


@dataclass
class ConvSpec:
    """Geometry and parameters of one convolutional layer.

    Attributes:
        name: Layer name used in error messages (``"2.1"``, ``"3.1.depth"`` ...).
        in_channels: Channels the layer consumes.
        out_channels: Channels the layer produces.
        kernel_h: Kernel height.
        kernel_w: Kernel width.
        stride: Stride in both directions.
        pad: Zero padding added to every side.
        weight: ``(out, in, kernel_h, kernel_w)`` tensor.
        bias: ``(out,)`` tensor.
    """

    name: str
    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int
    pad: int
    weight: Tensor
    bias: Tensor

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel_h, self.kernel_w) < 1:
            raise ConfigurationError(
                "Channel counts and kernel sizes must be positive", layer=self.name
            )
        if self.stride < 1 or self.pad < 0:
            raise ConfigurationError(
                "Stride must be positive and padding nonnegative", layer=self.name
            )
        expected = (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
        if self.weight.dims != expected:
            raise ConfigurationError(
                f"Weight dims {self.weight.dims} do not match {expected}",
                layer=self.name,
            )
        if self.bias.dims != (self.out_channels,):
            raise ConfigurationError(
                f"Bias dims {self.bias.dims} do not match ({self.out_channels},)",
                layer=self.name,
            )

    @classmethod
    def from_weights(
        cls, name: str, weight: Tensor, bias: Tensor, stride: int = 1, pad: int = 0
    ) -> "ConvSpec":
        out_c, in_c, kh, kw = weight.dims
        return cls(name, in_c, out_c, kh, kw, stride, pad, weight, bias)

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        """Output spatial size for a ``height`` x ``width`` input.

        Raises:
            ConfigurationError: If the padded input is smaller than the kernel.
        """
        out_h = conv_output_size(height, self.kernel_h, self.stride, self.pad)
        out_w = conv_output_size(width, self.kernel_w, self.stride, self.pad)
        if out_h < 1 or out_w < 1:
            raise ConfigurationError(
                f"Input {height}x{width} with pad {self.pad} is smaller than the "
                f"{self.kernel_h}x{self.kernel_w} kernel",
                layer=self.name,
            )
        return out_h, out_w


def _require_map(t: Tensor, what: str, layer: Optional[str] = None) -> None:
    if t.ndim != 4:
        raise ConfigurationError(
            f"{what} expects a (batch, channels, height, width) map, got dims {t.dims}",
            layer=layer,
        )


def conv2d(input: Tensor, spec: ConvSpec) -> Tensor:
    """Valid cross-correlation of ``input`` with the kernels of ``spec``.

    Args:
        input: ``(N, in_channels, H, W)`` map.
        spec: Layer geometry and parameters.

    Returns:
        Tensor: ``(N, out_channels, H_out, W_out)`` map.

    Raises:
        ConfigurationError: On a channel mismatch or an input smaller than the
            kernel; the message names the layer.
    """
    _require_map(input, "conv2d", spec.name)
    x = input.data
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ConfigurationError(
            f"Input has {c} channels, layer expects {spec.in_channels}",
            layer=spec.name,
        )
    out_h, out_w = spec.output_size(h, w)
    kh, kw, s, p = spec.kernel_h, spec.kernel_w, spec.stride, spec.pad

    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    windows = windows[:, :, :out_h, :out_w]
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * out_h * out_w, c * kh * kw)
    wmat = spec.weight.data.reshape(spec.out_channels, -1)
    out = cols @ wmat.T + spec.bias.data
    out = out.reshape(n, out_h, out_w, spec.out_channels).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, spec.out_channels)
        gx = gw = gb = None
        if spec.weight.requires_grad:
            gw = (g2.T @ cols).reshape(spec.weight.dims)
        if spec.bias.requires_grad:
            gb = g2.sum(axis=0)
        if input.requires_grad:
            dcols = (g2 @ wmat).reshape(n, out_h, out_w, c, kh, kw)
            gxp = np.zeros(xp.shape)
            row_end = s * (out_h - 1) + 1
            col_end = s * (out_w - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i : i + row_end : s, j : j + col_end : s] += dcols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            gx = gxp[:, :, p : p + h, p : p + w] if p else gxp
        return gx, gw, gb

    return Tensor.result(out, (input, spec.weight, spec.bias), backward)


def maxpool(input: Tensor, window: int, stride: int, layer: Optional[str] = None) -> Tensor:
    """Max over ``window`` x ``window`` patches taken every ``stride`` pixels.

    Ties go to the first position in row-major window order, and the backward
    map routes each output gradient to that position only.

    Raises:
        ConfigurationError: If the window exceeds the spatial extent.
    """
    _require_map(input, "maxpool", layer)
    x = input.data
    n, c, h, w = x.shape
    if window < 1 or stride < 1:
        raise ConfigurationError("Pool window and stride must be positive", layer=layer)
    if window > h or window > w:
        raise ConfigurationError(
            f"Pool window {window} exceeds the {h}x{w} input", layer=layer
        )
    out_h = pool_output_size(h, window, stride)
    out_w = pool_output_size(w, window, stride)
    patches = sliding_window_view(x, (window, window), axis=(2, 3))[:, :, ::stride, ::stride]
    patches = patches[:, :, :out_h, :out_w].reshape(n, c, out_h, out_w, window * window)
    arg = patches.argmax(axis=-1)
    out = np.take_along_axis(patches, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        rows = np.arange(out_h)[:, None] * stride + arg // window
        cols = np.arange(out_w)[None, :] * stride + arg % window
        batch = np.arange(n)[:, None, None, None]
        chan = np.arange(c)[None, :, None, None]
        gx = np.zeros_like(x)
        np.add.at(gx, (batch, chan, rows, cols), g)
        return (gx,)

    return Tensor.result(out, (input,), backward)


def linear(input: Tensor, weight: Tensor, bias: Tensor, layer: Optional[str] = None) -> Tensor:
    """Affine map ``x W^T + b`` of the flattened input.

    Args:
        input: ``(F,)`` vector or a batch whose trailing dims flatten to ``F``.
        weight: ``(out, F)`` matrix.
        bias: ``(out,)`` vector.

    Returns:
        Tensor: ``(out,)`` for a vector input, otherwise ``(N, out)``.

    Raises:
        ConfigurationError: If ``F`` does not match the weight columns.
    """
    vector = input.ndim == 1
    x = input.data.reshape(1, -1) if vector else input.data.reshape(input.dims[0], -1)
    if weight.ndim != 2 or x.shape[1] != weight.dims[1]:
        raise ConfigurationError(
            f"Flattened input length {x.shape[1]} does not match weight dims {weight.dims}",
            layer=layer,
        )
    if bias.dims != (weight.dims[0],):
        raise ConfigurationError(
            f"Bias dims {bias.dims} do not match weight dims {weight.dims}", layer=layer
        )
    out = x @ weight.data.T + bias.data
    if vector:
        out = out[0]

    def backward(g):
        g2 = g.reshape(1, -1) if vector else g
        gx = (g2 @ weight.data).reshape(input.dims) if input.requires_grad else None
        gw = g2.T @ x if weight.requires_grad else None
        gb = g2.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return Tensor.result(out, (input, weight, bias), backward)


def relu(input: Tensor) -> Tensor:
    """Elementwise ``max(0, x)``; the subgradient at 0 is 0."""
    x = input.data
    active = x > 0
    out = np.where(active, x, 0.0)

    def backward(g):
        return (g * active,)

    return Tensor.result(out, (input,), backward)


def bilinear_matrix(size_in: int, size_out: int) -> np.ndarray:
    """Linear interpolation weights from ``size_in`` samples to ``size_out``.

    Uses the align-corners-false convention: output sample ``i`` sits at
    source coordinate ``(i + 0.5) * size_in / size_out - 0.5``, clamped to the
    source range. Rows sum to one, so constants are preserved.
    """
    dst = np.arange(size_out, dtype=np.float64)
    src = np.clip((dst + 0.5) * (size_in / size_out) - 0.5, 0.0, size_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, size_in - 1)
    frac = src - lo
    m = np.zeros((size_out, size_in))
    rows = np.arange(size_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def upsample_bilinear(input: Tensor, factor: int) -> Tensor:
    """Enlarge every spatial dimension by an integer ``factor``.

    The backward map is the transpose of the (separable) interpolation.
    """
    _require_map(input, "upsample_bilinear")
    if factor < 1:
        raise ConfigurationError(f"Upsampling factor must be >= 1, got {factor}")
    if factor == 1:
        return input
    _, _, h, w = input.dims
    mh = bilinear_matrix(h, h * factor)
    mw = bilinear_matrix(w, w * factor)
    out = mh @ input.data @ mw.T

    def backward(g):
        return (mh.T @ g @ mw,)

    return Tensor.result(out, (input,), backward)


def concat_channels(*tensors: Tensor) -> Tensor:
    """Concatenate maps along the channel axis.

    Zero-channel maps are ignored, so ``concat_channels(x, empty)`` is ``x``.

    Raises:
        ConfigurationError: If batch or spatial dims differ.
    """
    parts = [t for t in tensors if t is not None and t.dims[1] > 0]
    if not parts:
        raise ConfigurationError("concat_channels needs at least one non-empty map")
    for t in parts:
        _require_map(t, "concat_channels")
    n, _, h, w = parts[0].dims
    for t in parts[1:]:
        if t.dims[0] != n or t.dims[2:] != (h, w):
            raise ConfigurationError(
                f"Cannot concatenate maps of dims {parts[0].dims} and {t.dims}"
            )
    if len(parts) == 1:
        return parts[0]
    out = np.concatenate([t.data for t in parts], axis=1)
    bounds = np.cumsum([0] + [t.dims[1] for t in parts])

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return Tensor.result(out, parts, backward)


def dropout(
    input: Tensor,
    rate: float,
    rng: Optional[np.random.Generator],
    training: bool,
) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - rate)`` at train time.

    Inference (``training=False``) and ``rate == 0`` are the identity.

    Raises:
        ConfigurationError: If ``rate`` is outside ``[0, 1)``.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"Dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return input
    if rng is None:
        raise ConfigurationError("Training-mode dropout needs a random generator")
    keep = rng.random(input.dims) >= rate
    scale = keep / (1.0 - rate)
    out = input.data * scale

    def backward(g):
        return (g * scale,)

    return Tensor.result(out, (input,), backward)


def l2_normalize_pixels(input: Tensor, epsilon: float = 1e-12) -> Tensor:
    """Divide each pixel's 3-vector by ``max(norm, epsilon)``.

    Raises:
        ConfigurationError: If the map does not have exactly 3 channels.
    """
    _require_map(input, "l2_normalize_pixels")
    if input.dims[1] != 3:
        raise ConfigurationError(
            f"l2_normalize_pixels expects 3 channels, got {input.dims[1]}"
        )
    x = input.data
    norm = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    inside = norm > epsilon
    denom = np.where(inside, norm, epsilon)
    out = x / denom

    def backward(g):
        radial = np.sum(g * out, axis=1, keepdims=True)
        gx = np.where(inside, (g - out * radial) / denom, g / denom)
        return (gx,)

    return Tensor.result(out, (input,), backward)


def softmax_channels(input: Tensor) -> Tensor:
    """Per-pixel softmax over the channel axis (max-subtracted)."""
    _require_map(input, "softmax_channels")
    z = input.data - input.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=1, keepdims=True)),)

    return Tensor.result(out, (input,), backward)


def select_channels(input: Tensor, start: int, stop: int) -> Tensor:
    """Channels ``[start, stop)`` of a map; the inverse of :func:`concat_channels`."""
    _require_map(input, "select_channels")
    c = input.dims[1]
    if not 0 <= start < stop <= c:
        raise ConfigurationError(f"Channel range [{start}, {stop}) leaves a {c}-channel map")
    if (start, stop) == (0, c):
        return input
    out = input.data[:, start:stop]

    def backward(g):
        gx = np.zeros(input.dims)
        gx[:, start:stop] = g
        return (gx,)

    return Tensor.result(out, (input,), backward)


def reshape(input: Tensor, dims: Sequence[int]) -> Tensor:
    out = input.data.reshape(tuple(dims))

    def backward(g):
        return (g.reshape(input.dims),)

    return Tensor.result(out, (input,), backward)


def flatten(input: Tensor) -> Tensor:
    """Collapse everything but the batch axis."""
    return reshape(input, (input.dims[0], -1))


def crop(input: Tensor, top: int, left: int, height: int, width: int) -> Tensor:
    """Spatial window ``[top, top+height) x [left, left+width)`` of a map.

    Raises:
        InputError: If the window leaves the map.
    """
    _require_map(input, "crop")
    _, _, h, w = input.dims
    if top < 0 or left < 0 or height < 1 or width < 1 or top + height > h or left + width > w:
        raise InputError(
            f"Crop {height}x{width} at ({top}, {left}) leaves the {h}x{w} map",
            field="crop",
        )
    if (top, left, height, width) == (0, 0, h, w):
        return input
    out = input.data[:, :, top : top + height, left : left + width]

    def backward(g):
        gx = np.zeros(input.dims)
        gx[:, :, top : top + height, left : left + width] = g
        return (gx,)

    return Tensor.result(out, (input,), backward)


def center_crop(input: Tensor, height: int, width: int) -> Tensor:
    """Crop the centred ``height`` x ``width`` window (extra row/column at the end)."""
    _, _, h, w = input.dims
    return crop(input, (h - height) // 2, (w - width) // 2, height, width)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.dims != b.dims:
        raise ConfigurationError(f"Cannot add dims {a.dims} and {b.dims}")

    def backward(g):
        return g, g

    return Tensor.result(a.data + b.data, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        return (g * factor,)

    return Tensor.result(a.data * factor, (a,), backward)
