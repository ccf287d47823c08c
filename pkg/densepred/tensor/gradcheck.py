from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import logging

import numpy as np

from .tensor import Tensor

logger = logging.getLogger("DensePred.Tensor")


@dataclass
class GradcheckReport:
    """Outcome of comparing analytic gradients with central differences.

    Attributes:
        name: Label of the checked function.
        max_rel_error: Largest per-entry relative error found.
        tol: Tolerance entries were compared against.
        checked: Number of entries compared.
        flagged: ``(input index, flat index, relative error)`` for every entry
            above ``tol``.
        finite: False when any function value or gradient was NaN/Inf.
    """

    name: str
    max_rel_error: float
    tol: float
    checked: int
    flagged: List[Tuple[int, int, float]] = field(default_factory=list)
    finite: bool = True

    @property
    def passed(self) -> bool:
        return self.finite and not self.flagged

    def summary(self) -> str:
        status = "ok" if self.passed else ("non-finite" if not self.finite else "FAIL")
        return f"{self.name:<32} {self.max_rel_error:11.3e} {self.tol:9.1e}  {status}"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Per-entry ``|a - n| / max(1, |a|, |n|)``."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Union[Tensor, Sequence[Tensor]],
    h: float = 1e-5,
    tol: float = 1e-6,
    max_entries: Optional[int] = None,
    seed: int = 0,
    name: str = "",
) -> GradcheckReport:
    """Check the backward map of ``fn`` against central finite differences.

    ``fn`` is called as ``fn(*inputs)`` and must be deterministic; tensors it
    captures by closure (model parameters, say) can be listed in ``inputs``
    too, since only their values are perturbed. Non-scalar outputs are reduced
    to a scalar with a fixed random projection drawn from ``seed``.

    Args:
        fn: The differentiable function.
        inputs: Tensor or tensors whose gradients are checked.
        h: Finite-difference step.
        tol: Per-entry relative tolerance.
        max_entries: If set, check only this many entries, chosen at random
            (with ``seed``) across all inputs.
        seed: Seed for the projection and the entry subset.
        name: Label carried into the report.

    Returns:
        GradcheckReport: Errors and flagged entries.
    """
    tensors = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    label = name or getattr(fn, "__name__", "fn")
    rng = np.random.default_rng(seed)
    saved_flags = [t.requires_grad for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t.zero_grad()

    try:
        out = fn(*tensors)
        projection = None if out.data.size == 1 else rng.uniform(-1.0, 1.0, out.dims)

        def objective() -> float:
            value = fn(*tensors).data
            if projection is None:
                return float(value.reshape(()))
            return float(np.sum(value * projection))

        out.backward(None if projection is None else projection)
        analytic = [
            t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
            for t in tensors
        ]

        sizes = [t.data.size for t in tensors]
        total = int(sum(sizes))
        if max_entries is not None and max_entries < total:
            picks = np.sort(rng.choice(total, size=max_entries, replace=False))
        else:
            picks = np.arange(total)
        offsets = np.cumsum([0] + sizes)

        finite = all(np.all(np.isfinite(a)) for a in analytic)
        flagged: List[Tuple[int, int, float]] = []
        worst = 0.0
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[k])
            data = tensors[k].data.reshape(-1)
            original = data[idx]
            data[idx] = original + h
            f_plus = objective()
            data[idx] = original - h
            f_minus = objective()
            data[idx] = original
            numeric = (f_plus - f_minus) / (2.0 * h)
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                finite = False
                continue
            err = float(relative_error(analytic[k].reshape(-1)[idx], numeric))
            worst = max(worst, err)
            if err > tol:
                flagged.append((k, idx, err))
    finally:
        for t, flag in zip(tensors, saved_flags):
            t.requires_grad = flag
            t.zero_grad()

    report = GradcheckReport(
        name=label,
        max_rel_error=worst,
        tol=tol,
        checked=len(picks),
        flagged=flagged,
        finite=finite,
    )
    logger.debug("gradcheck %s", report.summary())
    return report
