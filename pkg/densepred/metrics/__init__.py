# Re-export from report
from .report import (
    MetricReport,
    DEPTH_COLUMNS,
    NORMALS_COLUMNS,
    SEGMENTATION_COLUMNS,
    columns_for,
    combine_reports,
    format_ablation_table,
)

# Re-export from depth
from .depth import depth_metrics, scale_invariant_error

# Re-export from normals
from .normals import normal_metrics

# Re-export from segmentation
from .segmentation import argmax_labels, confusion_matrix, segmentation_metrics


__all__ = [
    "MetricReport",
    "DEPTH_COLUMNS",
    "NORMALS_COLUMNS",
    "SEGMENTATION_COLUMNS",
    "columns_for",
    "combine_reports",
    "format_ablation_table",
    "depth_metrics",
    "scale_invariant_error",
    "normal_metrics",
    "argmax_labels",
    "confusion_matrix",
    "segmentation_metrics",
]
