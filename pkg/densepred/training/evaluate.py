from typing import List, Optional, Sequence

import logging

import numpy as np

from ..data.sample import Prediction, Sample
from ..errors import InputError
from ..geometry.normals import normals_compatibility
from ..metrics import (
    MetricReport,
    combine_reports,
    depth_metrics,
    normal_metrics,
    segmentation_metrics,
)
from ..metrics.report import COMPATIBILITY_COLUMN
from ..project_types import PredictorProtocol, Task

EVAL_CHUNK = 8

logger = logging.getLogger("DensePred.Trainer")


class GroundTruthEcho:
    """Predictor that returns each sample's own ground truth.

    Depth at invalid pixels is set to 1 so it stays positive, and labels become
    one-hot probabilities over ``num_classes``.
    """

    def __init__(self, num_classes: int = 0):
        self.num_classes = num_classes

    def predict(self, samples: Sequence[Sample]) -> List[Prediction]:
        predictions = []
        for sample in samples:
            prediction = Prediction()
            valid = sample.valid
            if sample.depth is not None:
                prediction.depth = np.where(valid & (sample.depth > 0), sample.depth, 1.0)
            if sample.normals is not None:
                prediction.normals = sample.normals.copy()
            if sample.labels is not None and self.num_classes:
                one_hot = np.eye(self.num_classes)[np.where(valid, sample.labels, 0)]
                prediction.probabilities = one_hot.transpose(2, 0, 1)
            predictions.append(prediction)
        return predictions


def predict_all(predictor: PredictorProtocol, samples: Sequence[Sample]) -> List[Prediction]:
    predictions: List[Prediction] = []
    for start in range(0, len(samples), EVAL_CHUNK):
        predictions.extend(predictor.predict(list(samples[start : start + EVAL_CHUNK])))
    return predictions


def _stack(values, name: str, task: Task) -> np.ndarray:
    if any(v is None for v in values):
        raise InputError(f"Evaluating {task.value} needs {name} for every sample", field=name)
    return np.stack(values)


def evaluate(
    predictor: PredictorProtocol,
    dataset: Sequence[Sample],
    task,
    num_classes: Optional[int] = None,
) -> MetricReport:
    """Deterministic predictions over ``dataset`` scored against its ground truth.

    Args:
        predictor: A trained model or anything with the same ``predict``.
        dataset: Samples with the task's ground truth.
        task: Task to score.
        num_classes: Class count for segmentation; taken from the predicted
            probabilities when omitted.

    Returns:
        MetricReport: The task's metrics; the depth+normals task also carries
        the mean angle between predicted normals and normals derived from the
        predicted depth.

    Raises:
        InputError: If the dataset is empty or lacks ground truth.
    """
    task = Task.parse(task)
    samples = list(dataset)
    if not samples:
        raise InputError("Cannot evaluate on an empty dataset", field="dataset")
    predictions = predict_all(predictor, samples)
    mask = np.stack([s.valid for s in samples])

    reports = []
    if task in (Task.DEPTH, Task.DEPTH_NORMALS):
        truth = _stack([s.depth for s in samples], "depth", task)
        pred = _stack([p.depth for p in predictions], "depth", task)
        reports.append(depth_metrics(pred, truth, mask & (truth > 0)))
    if task in (Task.NORMALS, Task.DEPTH_NORMALS):
        truth = _stack([s.normals for s in samples], "normals", task)
        pred = _stack([p.normals for p in predictions], "normals", task)
        reports.append(normal_metrics(pred, truth, mask))
    if task is Task.SEMANTIC:
        truth = _stack([s.labels for s in samples], "labels", task)
        probabilities = _stack([p.probabilities for p in predictions], "probabilities", task)
        k = num_classes or probabilities.shape[1]
        pred = np.argmax(probabilities, axis=1)
        reports.append(segmentation_metrics(pred, truth, mask, k))

    if task is Task.DEPTH_NORMALS:
        angles = [
            normals_compatibility(p.depth, p.normals, s.intrinsics)
            for p, s in zip(predictions, samples)
        ]
        report = combine_reports(task, *reports, extra={COMPATIBILITY_COLUMN: float(np.nanmean(angles))})
    else:
        report = reports[0]
    logger.info("Evaluated %d samples: %s", len(samples), report.to_keyvalue().replace("\n", " "))
    return report
