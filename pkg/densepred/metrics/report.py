"""Metric reports: plain-text tables and key-value files."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import math

import numpy as np

from ..errors import FormatError
from ..project_types import Task

DEPTH_COLUMNS = ("delta1", "delta2", "delta3", "abs_rel", "sqr_rel", "rms_lin", "rms_log", "sc_inv")
NORMALS_COLUMNS = ("angle_mean", "angle_median", "within_11.25", "within_22.5", "within_30")
SEGMENTATION_COLUMNS = ("pixel_acc", "class_acc", "freq_jaccard", "mean_jaccard")
COMPATIBILITY_COLUMN = "compat_deg"

HEADERS = {
    "delta1": "d<1.25",
    "delta2": "d<1.25^2",
    "delta3": "d<1.25^3",
    "abs_rel": "abs rel",
    "sqr_rel": "sqr rel",
    "rms_lin": "RMS(lin)",
    "rms_log": "RMS(log)",
    "sc_inv": "sc-inv",
    "angle_mean": "Mean",
    "angle_median": "Median",
    "within_11.25": "11.25",
    "within_22.5": "22.5",
    "within_30": "30",
    "pixel_acc": "Pix. Acc.",
    "class_acc": "Per-Cls Acc.",
    "freq_jaccard": "Freq. Jaccard",
    "mean_jaccard": "Av. Jaccard",
    "compat_deg": "Compat.",
}


def columns_for(task: Task) -> Tuple[str, ...]:
    """Report columns of a task, in table order."""
    if task is Task.DEPTH:
        return DEPTH_COLUMNS
    if task is Task.NORMALS:
        return NORMALS_COLUMNS
    if task is Task.SEMANTIC:
        return SEGMENTATION_COLUMNS
    return DEPTH_COLUMNS + NORMALS_COLUMNS + (COMPATIBILITY_COLUMN,)


@dataclass
class MetricReport:
    """Scalar metrics of one evaluation.

    Attributes:
        task: The task that was evaluated.
        values: Metric name to value, in column order.
        pixel_count: Number of valid pixels the metrics were computed over.
        per_class: Optional per-class arrays (``accuracy``, ``jaccard``),
            NaN for classes absent from the ground truth.
    """

    task: Task
    values: Dict[str, float]
    pixel_count: int
    per_class: Optional[Dict[str, np.ndarray]] = field(default=None)

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def columns(self) -> List[str]:
        known = [c for c in columns_for(self.task) if c in self.values]
        return known + [c for c in self.values if c not in known]

    def to_table(self, precision: int = 4) -> str:
        """Two-line table: headers, then values."""
        cols = self.columns()
        widths = [max(len(HEADERS.get(c, c)), precision + 4) for c in cols]
        header = "  ".join(HEADERS.get(c, c).rjust(w) for c, w in zip(cols, widths))
        row = "  ".join(f"{self.values[c]:.{precision}f}".rjust(w) for c, w in zip(cols, widths))
        return header + "\n" + row + "\n"

    def to_keyvalue(self) -> str:
        """Machine-readable ``key=value`` lines; floats are written exactly."""
        lines = [f"task={self.task.value}", f"pixel_count={self.pixel_count}"]
        lines += [f"{name}={self.values[name]!r}" for name in self.columns()]
        for name, array in (self.per_class or {}).items():
            for class_id, value in enumerate(array):
                lines.append(f"class.{name}.{class_id}={float(value)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_keyvalue(cls, text: str, path=None) -> "MetricReport":
        """Parse :meth:`to_keyvalue` output.

        Raises:
            FormatError: On a malformed line, with its line number.
        """
        task = None
        pixel_count = 0
        values: Dict[str, float] = {}
        per_class: Dict[str, Dict[int, float]] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"Expected 'key=value', got '{line}'", path=path, offset=number)
            try:
                if key == "task":
                    task = Task.parse(value)
                elif key == "pixel_count":
                    pixel_count = int(value)
                elif key.startswith("class."):
                    _, name, class_id = key.split(".", 2)
                    per_class.setdefault(name, {})[int(class_id)] = float(value)
                else:
                    values[key] = float(value)
            except ValueError as exc:
                raise FormatError(str(exc), path=path, offset=number) from exc
        if task is None:
            raise FormatError("Report has no task line", path=path)
        arrays = {
            name: np.array([entries[c] for c in sorted(entries)]) for name, entries in per_class.items()
        }
        return cls(task, values, pixel_count, arrays or None)

    def is_close(self, other: "MetricReport", tol: float = 0.0) -> bool:
        if self.task is not other.task or self.values.keys() != other.values.keys():
            return False
        for name, value in self.values.items():
            theirs = other.values[name]
            if math.isnan(value) and math.isnan(theirs):
                continue
            if abs(value - theirs) > tol:
                return False
        return True


def combine_reports(task: Task, *reports: MetricReport, extra=None) -> MetricReport:
    """Merge reports of the branches of a multi-output task."""
    values: Dict[str, float] = {}
    for report in reports:
        values.update(report.values)
    values.update(extra or {})
    return MetricReport(task, values, max(r.pixel_count for r in reports))


def format_ablation_table(rows: Sequence[Tuple[str, MetricReport]], precision: int = 4) -> str:
    """Comparison table: one labelled row per report, columns of the first report."""
    if not rows:
        return ""
    cols = rows[0][1].columns()
    label_width = max(len("Config"), max(len(label) for label, _ in rows))
    widths = [max(len(HEADERS.get(c, c)), precision + 4) for c in cols]
    lines = [
        "Config".ljust(label_width)
        + "  "
        + "  ".join(HEADERS.get(c, c).rjust(w) for c, w in zip(cols, widths))
    ]
    for label, report in rows:
        cells = [
            f"{report.values.get(c, float('nan')):.{precision}f}".rjust(w)
            for c, w in zip(cols, widths)
        ]
        lines.append(label.ljust(label_width) + "  " + "  ".join(cells))
    return "\n".join(lines) + "\n"
