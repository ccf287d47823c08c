from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, InputError

MAX_RANK = 4

BackwardFn = Callable[[np.ndarray], None]


class Tensor:
    """Dense double-precision array with an optional gradient buffer.

    Every operation in :mod:`densepred.tensor.ops` records the tensors it read
    and a closure that maps the output gradient to input gradients. Calling
    :meth:`backward` on a result walks that record in reverse topological order
    and accumulates exact gradients into every tensor with ``requires_grad``.

    Dimensions follow ``(batch, channels, height, width)`` for feature maps;
    lower ranks are used for vectors, matrices and scalars.

    Attributes:
        data: The values, a C-contiguous float64 array.
        grad: Accumulated gradient with the same shape as ``data``, or None.
        requires_grad: Whether gradients flow into this tensor.
        name: Optional label (parameter name) used in diagnostics.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        name: str = "",
        _parents: Sequence["Tensor"] = (),
        _backward: Optional[BackwardFn] = None,
    ):
        array = np.ascontiguousarray(data, dtype=np.float64)
        if array.ndim > MAX_RANK:
            raise ConfigurationError(
                f"Tensor rank {array.ndim} exceeds the supported maximum of {MAX_RANK}",
                layer=name or None,
            )
        if not np.all(np.isfinite(array)):
            raise InputError("Tensor values must be finite", field=name or None)
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple["Tensor", ...] = tuple(_parents)
        self._backward = _backward

    @classmethod
    def result(
        cls,
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
    ) -> "Tensor":
        """Build an op output linked to ``parents`` when any of them needs gradients.

        The ``backward`` closure returns one gradient per parent, in order, and
        may return None for parents that do not require gradients. Op outputs
        skip the finiteness scan that user-built tensors go through.
        """
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data, dtype=np.float64)
        out.grad = None
        out.name = ""
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.data.shape

    shape = dims

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """A new leaf sharing no graph with this tensor."""
        return Tensor(self.data.copy(), name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, grad: np.ndarray) -> None:
        """Add ``grad`` into this tensor's gradient buffer."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Accumulate gradients of this tensor into every tracked ancestor.

        Args:
            grad: Gradient of the final objective with respect to this tensor.
                Defaults to 1 for a scalar tensor.

        Raises:
            InputError: If ``grad`` is omitted for a non-scalar tensor.
        """
        if grad is None:
            if self.data.size != 1:
                raise InputError(
                    "backward() without an explicit gradient needs a scalar tensor",
                    field=self.name or None,
                )
            grad = np.ones_like(self.data)

        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                node.accumulate(node_grad)
                continue
            for parent, parent_grad in _run_backward(node, node_grad):
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad

    def __repr__(self) -> str:
        label = f" name='{self.name}'" if self.name else ""
        return f"Tensor(dims={self.dims}{label}, requires_grad={self.requires_grad})"


def _run_backward(node: Tensor, grad: np.ndarray) -> List[Tuple[Tensor, np.ndarray]]:
    parent_grads = node._backward(grad)
    return [
        (parent, g)
        for parent, g in zip(node._parents, parent_grads)
        if g is not None and parent.requires_grad
    ]


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def parameter(data, name: str) -> Tensor:
    """Create a trainable leaf tensor."""
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(value) -> Tensor:
    """Wrap arrays (or pass Tensors through) without tracking gradients."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()
