"""Finite-difference checks of every differentiable primitive, loss and tiny model.

Each case is a zero-argument callable returning a
:class:`~densepred.tensor.gradcheck.GradcheckReport`, registered in
:data:`GRADCHECK_SUITE` under the name printed in the report.
"""

from typing import Callable, Iterable, List, Optional

import numpy as np

from ..data.sample import Sample
from ..geometry.camera import Intrinsics
from ..losses import ClassWeights, depth_loss, depth_normals_loss, normals_loss, semantic_loss
from ..model.config import tiny_config
from ..model.network import build_model, forward_full, forward_scale3_crop, scale2_features
from ..project_types import Modality, Mode
from ..registry import Registry
from ..tasks import preset_for
from ..tensor import ops
from ..tensor.gradcheck import GradcheckReport, gradcheck
from ..tensor.tensor import Tensor
from ..training.loop import targets_on_grid

PRIMITIVE_TOL = 1e-6
COMPOSED_TOL = 1e-4
COMPOSED_ENTRIES = 60

Case = Callable[[], GradcheckReport]

GRADCHECK_SUITE: Registry[Case] = Registry("gradcheck")


def _rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)


def _map(rng, *dims) -> Tensor:
    return Tensor(rng.standard_normal(dims))


def _unit(rng, n, h, w) -> np.ndarray:
    v = rng.standard_normal((n, 3, h, w))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _case(name: str, tol: float = PRIMITIVE_TOL):
    def decorator(build):
        def case() -> GradcheckReport:
            fn, inputs, options = build()
            return gradcheck(fn, inputs, tol=tol, name=name, **options)

        GRADCHECK_SUITE.add(name, value=case, tol=tol)
        return build

    return decorator


@_case("conv2d")
def _conv():
    rng = _rng(1)
    x, w, b = _map(rng, 2, 3, 7, 6), _map(rng, 4, 3, 3, 3), _map(rng, 4)

    def fn(x, w, b):
        return ops.conv2d(x, ops.ConvSpec.from_weights("conv", w, b, stride=2, pad=1))

    return fn, [x, w, b], {}


@_case("maxpool")
def _maxpool():
    return (lambda x: ops.maxpool(x, 3, 2)), _map(_rng(2), 2, 2, 7, 7), {}


@_case("linear")
def _linear():
    rng = _rng(3)
    return ops.linear, [_map(rng, 3, 5), _map(rng, 4, 5), _map(rng, 4)], {}


@_case("relu")
def _relu():
    return ops.relu, _map(_rng(4), 2, 3, 4, 5), {}


@_case("upsample_bilinear")
def _upsample():
    return (lambda x: ops.upsample_bilinear(x, 4)), _map(_rng(5), 1, 2, 3, 4), {}


@_case("concat_channels")
def _concat():
    rng = _rng(6)
    return ops.concat_channels, [_map(rng, 2, 1, 3, 4), _map(rng, 2, 3, 3, 4)], {}


@_case("dropout")
def _dropout():
    return (lambda x: ops.dropout(x, 0.5, _rng(7), True)), _map(_rng(8), 4, 10), {}


@_case("l2_normalize_pixels")
def _normalize():
    return ops.l2_normalize_pixels, _map(_rng(9), 2, 3, 4, 5), {}


@_case("softmax_channels")
def _softmax():
    return ops.softmax_channels, _map(_rng(10), 2, 5, 3, 4), {}


@_case("select_channels")
def _select():
    return (lambda x: ops.select_channels(x, 1, 3)), _map(_rng(11), 2, 4, 3, 3), {}


@_case("reshape+flatten")
def _reshape():
    return (lambda x: ops.reshape(ops.flatten(x), (2, 6, 2, 5))), _map(_rng(12), 2, 3, 4, 5), {}


@_case("crop")
def _crop():
    return (lambda x: ops.crop(x, 1, 2, 3, 3)), _map(_rng(13), 1, 2, 5, 6), {}


@_case("center_crop")
def _center_crop():
    return (lambda x: ops.center_crop(x, 3, 4)), _map(_rng(14), 1, 2, 6, 7), {}


@_case("add+scale")
def _add_scale():
    rng = _rng(15)
    return (lambda a, b: ops.scale(ops.add(a, b), -2.5)), [_map(rng, 2, 3), _map(rng, 2, 3)], {}


def _loss_targets(seed: int, n: int = 2, h: int = 4, w: int = 5):
    rng = _rng(seed)
    depth = rng.uniform(0.5, 5.0, (n, h, w))
    mask = rng.random((n, h, w)) > 0.3
    mask[:, 0, 0] = True
    return rng, depth, _unit(rng, n, h, w), mask


@_case("depth_loss")
def _depth_loss():
    rng, depth, _, mask = _loss_targets(16)
    return (lambda p: depth_loss(p, depth, mask)), _map(rng, 2, 1, 4, 5), {}


@_case("normals_loss")
def _normals_loss():
    rng, _, normals, mask = _loss_targets(17)
    return (lambda p: normals_loss(ops.l2_normalize_pixels(p), normals, mask)), _map(rng, 2, 3, 4, 5), {}


@_case("semantic_loss")
def _semantic_loss():
    rng, _, _, mask = _loss_targets(18)
    labels = rng.integers(0, 4, (2, 4, 5))
    weights = ClassWeights(np.array([0.5, 1.0, 2.0, 1.5]))
    return (lambda s: semantic_loss(s, labels, mask, weights)), _map(rng, 2, 4, 4, 5), {}


@_case("depth_normals_loss")
def _depth_normals_loss():
    rng, depth, normals, mask = _loss_targets(19)
    return (lambda p: depth_normals_loss(p, depth, normals, mask)), _map(rng, 2, 4, 4, 5), {}


def tiny_samples(config, seed: int, count: int = 2) -> List[Sample]:
    """Random samples sized for ``config`` with every ground-truth field."""
    rng = _rng(seed)
    h, w = config.input_size
    samples = []
    for _ in range(count):
        samples.append(
            Sample(
                rgb=rng.random((3, h, w)),
                intrinsics=Intrinsics.default_for(w, h),
                depth=rng.uniform(1.0, 4.0, (h, w)),
                normals=_unit(rng, 1, h, w)[0],
                labels=rng.integers(0, max(config.num_classes, 2), (h, w)),
                mask=np.ones((h, w), dtype=bool),
            )
        )
    return samples


def _composed(task: str, seed: int, **overrides):
    config = tiny_config(task, num_classes=4 if task == "semantic" else 0, seed=seed, **overrides)
    model = build_model(config)
    samples = tiny_samples(config, seed)
    preset = preset_for(task)

    def fn(*_params):
        out = forward_full(model, samples, Mode.EVAL, scores=True)
        return preset.loss(out, targets_on_grid(model, samples, out.dims[2:]))

    options = {"max_entries": COMPOSED_ENTRIES, "seed": seed}
    return fn, model.parameters(), options


def _register_tiny_model(task: str) -> None:
    _case(f"tiny_model/{task}", tol=COMPOSED_TOL)(lambda: _composed(task, seed=20))


for _task in ("depth", "normals", "semantic", "depth+normals"):
    _register_tiny_model(_task)


@_case("tiny_model/modalities", tol=COMPOSED_TOL)
def _modalities():
    return _composed(
        "semantic", seed=21, input_modalities=(Modality.RGB, Modality.DEPTH, Modality.NORMALS)
    )


@_case("tiny_model/scale3_crop", tol=COMPOSED_TOL)
def _scale3_crop():
    config = tiny_config("depth", seed=22)
    model = build_model(config)
    samples = tiny_samples(config, 22)
    features = scale2_features(model, samples)
    depth = np.stack([s.depth for s in samples])[:, 1:4, 2:6]
    mask = np.ones_like(depth, dtype=bool)

    def fn(*_params):
        out = forward_scale3_crop(model, samples, features, (1, 2), (3, 4), scores=True)
        return depth_loss(out, depth, mask)

    return fn, model.parameters(scales=(3,)), {"max_entries": COMPOSED_ENTRIES, "seed": 22}


def run_suite(
    names: Optional[Iterable[str]] = None, registry: Optional[Registry[Case]] = None
) -> List[GradcheckReport]:
    """Run the named cases (all when omitted) in registration order.

    Raises:
        NotRegisteredError: If a name is not in the registry.
    """
    registry = registry if registry is not None else GRADCHECK_SUITE
    selected = list(names) if names is not None else registry.names()
    return [registry.resolve(name)() for name in selected]


def format_suite(reports: Iterable[GradcheckReport]) -> str:
    """``op  max_rel_err  tol  status`` table."""
    lines = [f"{'op':<32} {'max_rel_err':>11} {'tol':>9}  status"]
    lines += [report.summary() for report in reports]
    return "\n".join(lines) + "\n"
