import math

import numpy as np
import pytest

from densepred.errors import FormatError, InputError
from densepred.metrics import (
    MetricReport,
    argmax_labels,
    columns_for,
    combine_reports,
    confusion_matrix,
    depth_metrics,
    format_ablation_table,
    normal_metrics,
    segmentation_metrics,
)
from densepred.project_types import Task


def _unit_normals(seed, shape=(3, 4, 5)):
    n = np.random.default_rng(seed).standard_normal(shape)
    return n / np.linalg.norm(n, axis=0, keepdims=True)


class TestDepthMetrics:
    """Tests for the depth error table."""

    def test_perfect_prediction(self):
        # Arrange
        gt = np.random.default_rng(0).uniform(1.0, 10.0, (2, 4, 4))

        # Act
        report = depth_metrics(gt.copy(), gt)

        # Assert
        assert report["delta1"] == report["delta3"] == 1.0
        for name in ("abs_rel", "sqr_rel", "rms_lin", "rms_log", "sc_inv"):
            assert report[name] == pytest.approx(0.0, abs=1e-12)
        assert report.pixel_count == 32

    def test_global_scale_only_hurts_scale_dependent_metrics(self):
        """Doubling every depth leaves the scale-invariant error at zero."""
        # Arrange
        gt = np.random.default_rng(1).uniform(1.0, 10.0, (3, 5))

        # Act
        report = depth_metrics(2.0 * gt, gt)

        # Assert
        assert report["sc_inv"] == pytest.approx(0.0, abs=1e-12)
        assert report["delta1"] == report["delta2"] == report["delta3"] == 0.0
        assert report["abs_rel"] == pytest.approx(1.0)
        assert report["rms_log"] == pytest.approx(math.log(2.0))

    def test_hand_computed_values(self):
        # Arrange
        pred = np.array([[1.0, 2.0]])
        gt = np.array([[1.0, 1.0]])

        # Act
        report = depth_metrics(pred, gt)

        # Assert
        assert report["delta1"] == 0.5
        assert report["abs_rel"] == pytest.approx(0.5)
        assert report["sqr_rel"] == pytest.approx(0.5)
        assert report["rms_lin"] == pytest.approx(math.sqrt(0.5))
        assert report["sc_inv"] == pytest.approx(math.log(2) ** 2 / 4)

    def test_invalid_pixels_are_ignored(self):
        # Arrange
        pred = np.array([[1.0, 50.0]])
        gt = np.array([[1.0, 0.0]])

        # Act
        report = depth_metrics(pred, gt)

        # Assert
        assert report.pixel_count == 1
        assert report["abs_rel"] == 0.0

    def test_pixel_order_does_not_matter(self):
        # Arrange
        rng = np.random.default_rng(2)
        pred = rng.uniform(1.0, 5.0, (1, 6, 6))
        gt = rng.uniform(1.0, 5.0, (1, 6, 6))
        order = rng.permutation(36)

        # Act
        plain = depth_metrics(pred, gt)
        shuffled = depth_metrics(
            pred.reshape(1, -1)[:, order].reshape(1, 6, 6), gt.reshape(1, -1)[:, order].reshape(1, 6, 6)
        )

        # Assert
        assert plain.is_close(shuffled, tol=1e-12)

    def test_empty_mask(self):
        with pytest.raises(InputError):
            depth_metrics(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2), dtype=bool))

    def test_nonpositive_prediction(self):
        with pytest.raises(InputError):
            depth_metrics(np.array([[0.0, 1.0]]), np.ones((1, 2)))


class TestNormalMetrics:
    """Tests for angular error statistics."""

    def test_identical_maps(self):
        # Arrange
        n = _unit_normals(3)

        # Act
        report = normal_metrics(n, n)

        # Assert
        assert report["angle_mean"] == pytest.approx(0.0, abs=1e-5)
        assert report["within_11.25"] == 1.0

    def test_perpendicular_maps(self):
        # Arrange
        pred = np.zeros((3, 2, 2))
        pred[0] = 1.0
        gt = np.zeros((3, 2, 2))
        gt[2] = -1.0

        # Act
        report = normal_metrics(pred, gt)

        # Assert
        assert report["angle_mean"] == pytest.approx(90.0)
        assert report["angle_median"] == pytest.approx(90.0)
        assert report["within_30"] == 0.0

    def test_default_mask_skips_zero_ground_truth(self):
        # Arrange
        gt = _unit_normals(4, (1, 3, 2, 2))
        gt[0, :, 0, 0] = 0.0

        # Act
        report = normal_metrics(-gt, gt)

        # Assert
        assert report.pixel_count == 3
        assert report["angle_mean"] == pytest.approx(180.0)

    def test_rotation_invariance(self):
        """Rotating both maps by the same rotation keeps every angle."""
        # Arrange
        pred, gt = _unit_normals(5), _unit_normals(6)
        c, s = math.cos(0.7), math.sin(0.7)
        rotation = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

        # Act
        plain = normal_metrics(pred, gt)
        rotated = normal_metrics(
            np.einsum("ij,jhw->ihw", rotation, pred), np.einsum("ij,jhw->ihw", rotation, gt)
        )

        # Assert
        assert plain.is_close(rotated, tol=1e-6)


class TestSegmentationMetrics:
    """Tests for the confusion-matrix metrics."""

    def test_hand_computed_values(self):
        # Arrange
        gt = np.array([[0, 0, 1, 1]])
        pred = np.array([[0, 1, 1, 1]])

        # Act
        report = segmentation_metrics(pred, gt, None, 3)

        # Assert
        assert report["pixel_acc"] == 0.75
        assert report["class_acc"] == 0.75
        assert report["mean_jaccard"] == pytest.approx((0.5 + 2 / 3) / 2)
        assert report["freq_jaccard"] == pytest.approx(0.5 * 0.5 + 0.5 * 2 / 3)
        assert math.isnan(report.per_class["accuracy"][2])

    def test_confusion_rows_are_ground_truth(self):
        matrix = confusion_matrix(np.array([1, 1, 0]), np.array([0, 1, 1]), None, 2)
        np.testing.assert_array_equal(matrix, [[0, 1], [1, 1]])

    def test_mask_and_range(self):
        # Arrange
        gt = np.array([[0, 7]])
        pred = np.array([[0, 0]])

        # Act
        report = segmentation_metrics(pred, gt, np.array([[True, False]]), 2)

        # Assert
        assert report["pixel_acc"] == 1.0
        with pytest.raises(InputError):
            segmentation_metrics(pred, gt, None, 2)

    def test_argmax_labels(self):
        probabilities = np.zeros((2, 3, 1, 2))
        probabilities[0, 2, 0, 0] = 1.0
        probabilities[1, 1, 0, 1] = 1.0
        np.testing.assert_array_equal(argmax_labels(probabilities), [[[2, 0]], [[0, 1]]])


def _depth_metrics_loop(pred, gt):
    h, w = gt.shape
    n = h * w
    hits = [0, 0, 0]
    abs_rel = sqr_rel = squares = log_squares = log_sum = 0.0
    for y in range(h):
        for x in range(w):
            p, g = pred[y, x], gt[y, x]
            ratio = max(p / g, g / p)
            for k in range(3):
                hits[k] += ratio < 1.25 ** (k + 1)
            abs_rel += abs(p - g) / g
            sqr_rel += (p - g) ** 2 / g
            squares += (p - g) ** 2
            d = math.log(p) - math.log(g)
            log_squares += d * d
            log_sum += d
    return {
        "delta1": hits[0] / n,
        "delta2": hits[1] / n,
        "delta3": hits[2] / n,
        "abs_rel": abs_rel / n,
        "sqr_rel": sqr_rel / n,
        "rms_lin": math.sqrt(squares / n),
        "rms_log": math.sqrt(log_squares / n),
        "sc_inv": log_squares / n - log_sum**2 / n**2,
    }


def _normal_angles_loop(pred, gt):
    angles = []
    for y in range(gt.shape[1]):
        for x in range(gt.shape[2]):
            dot = sum(pred[c, y, x] * gt[c, y, x] for c in range(3))
            angles.append(math.degrees(math.acos(min(1.0, max(-1.0, dot)))))
    return sorted(angles)


def _confusion_loop(pred, gt, num_classes):
    matrix = [[0] * num_classes for _ in range(num_classes)]
    for p, g in zip(pred.ravel(), gt.ravel()):
        matrix[g][p] += 1
    return matrix


class TestMetricsAgainstLoops:
    """Vectorised metrics match per-pixel loops on random 16x12 maps."""

    @pytest.mark.parametrize("seed", range(100))
    def test_depth_metrics(self, seed):
        # Arrange
        rng = np.random.default_rng(seed)
        gt = rng.uniform(0.5, 10.0, (12, 16))
        pred = gt * np.exp(rng.normal(0.0, 0.3, (12, 16)))

        # Act
        report = depth_metrics(pred, gt)

        # Assert
        expected = _depth_metrics_loop(pred, gt)
        for name in ("delta1", "delta2", "delta3"):
            assert report[name] == expected[name]
        for name in ("abs_rel", "sqr_rel", "rms_lin", "rms_log", "sc_inv"):
            assert report[name] == pytest.approx(expected[name], abs=1e-12)
        assert report["delta1"] <= report["delta2"] <= report["delta3"]
        assert report.pixel_count == 192

    @pytest.mark.parametrize("seed", range(100))
    def test_normal_metrics(self, seed):
        # Arrange
        rng = np.random.default_rng(seed)
        gt = _unit_normals(seed, (3, 12, 16))
        pred = gt + rng.normal(0.0, 0.4, (3, 12, 16))
        pred /= np.linalg.norm(pred, axis=0, keepdims=True)

        # Act
        report = normal_metrics(pred, gt)

        # Assert
        angles = _normal_angles_loop(pred, gt)
        n = len(angles)
        assert report["angle_mean"] == pytest.approx(sum(angles) / n, abs=1e-9)
        assert report["angle_median"] == pytest.approx((angles[n // 2 - 1] + angles[n // 2]) / 2, abs=1e-9)
        for threshold in (11.25, 22.5, 30.0):
            within = sum(a < threshold for a in angles)
            assert report[f"within_{threshold:g}"] == within / n

    @pytest.mark.parametrize("seed", range(100))
    def test_segmentation_metrics(self, seed):
        # Arrange
        rng = np.random.default_rng(seed)
        gt = rng.integers(0, 5, (12, 16))
        pred = np.where(rng.random((12, 16)) < 0.6, gt, rng.integers(0, 5, (12, 16)))

        # Act
        report = segmentation_metrics(pred, gt, None, 5)

        # Assert
        matrix = _confusion_loop(pred, gt, 5)
        np.testing.assert_array_equal(confusion_matrix(pred, gt, None, 5), matrix)
        total = 192
        rows = [sum(matrix[c]) for c in range(5)]
        cols = [sum(matrix[r][c] for r in range(5)) for c in range(5)]
        present = [c for c in range(5) if rows[c] > 0]
        accuracy = {c: matrix[c][c] / rows[c] for c in present}
        jaccard = {c: matrix[c][c] / (rows[c] + cols[c] - matrix[c][c]) for c in present}
        assert report["pixel_acc"] == sum(matrix[c][c] for c in range(5)) / total
        assert report["class_acc"] == pytest.approx(sum(accuracy.values()) / len(present), abs=1e-12)
        assert report["mean_jaccard"] == pytest.approx(sum(jaccard.values()) / len(present), abs=1e-12)
        assert report["freq_jaccard"] == pytest.approx(
            sum(rows[c] / total * jaccard[c] for c in present), abs=1e-12
        )
        for c in present:
            assert report.per_class["accuracy"][c] == accuracy[c]
            assert report.per_class["jaccard"][c] == jaccard[c]

    @pytest.mark.parametrize("k", [0.5, 2.0, 10.0])
    def test_scale_invariant_error_ignores_a_global_factor(self, k):
        # Arrange
        rng = np.random.default_rng(3)
        gt = rng.uniform(0.5, 10.0, (2, 12, 16))
        pred = gt * np.exp(rng.normal(0.0, 0.3, (2, 12, 16)))

        # Act
        base = depth_metrics(pred, gt)["sc_inv"]
        scaled = depth_metrics(k * pred, gt)["sc_inv"]

        # Assert
        assert scaled == pytest.approx(base, abs=1e-10)

    def test_segmentation_ignores_relabeling(self):
        """Renaming classes in both maps permutes the per-class results only."""
        # Arrange
        rng = np.random.default_rng(4)
        gt = rng.integers(0, 5, (12, 16))
        pred = np.where(rng.random((12, 16)) < 0.5, gt, rng.integers(0, 5, (12, 16)))
        perm = rng.permutation(5)

        # Act
        base = segmentation_metrics(pred, gt, None, 5)
        renamed = segmentation_metrics(perm[pred], perm[gt], None, 5)

        # Assert
        assert renamed.is_close(base, tol=1e-12)
        np.testing.assert_allclose(renamed.per_class["jaccard"][perm], base.per_class["jaccard"])
        np.testing.assert_allclose(renamed.per_class["accuracy"][perm], base.per_class["accuracy"])

    def test_pixel_order_does_not_matter(self):
        # Arrange
        rng = np.random.default_rng(5)
        gt_labels = rng.integers(0, 4, 192)
        pred_labels = rng.integers(0, 4, 192)
        gt_normals = _unit_normals(5, (3, 192))
        pred_normals = _unit_normals(6, (3, 192))
        order = rng.permutation(192)

        # Act
        labels = segmentation_metrics(pred_labels, gt_labels, None, 4)
        shuffled_labels = segmentation_metrics(pred_labels[order], gt_labels[order], None, 4)
        normals = normal_metrics(pred_normals.reshape(3, 12, 16), gt_normals.reshape(3, 12, 16))
        shuffled_normals = normal_metrics(
            pred_normals[:, order].reshape(3, 12, 16), gt_normals[:, order].reshape(3, 12, 16)
        )

        # Assert
        assert shuffled_labels.is_close(labels, tol=1e-12)
        assert shuffled_normals.is_close(normals, tol=1e-9)


class TestMetricReport:
    """Tests for report files and tables."""

    def test_keyvalue_round_trip(self):
        # Arrange
        report = segmentation_metrics(np.array([[0, 1, 1]]), np.array([[0, 1, 0]]), None, 3)

        # Act
        restored = MetricReport.from_keyvalue(report.to_keyvalue())

        # Assert
        assert restored.is_close(report)
        assert restored.pixel_count == 3
        assert math.isnan(restored.per_class["jaccard"][2])

    def test_malformed_line(self):
        with pytest.raises(FormatError) as excinfo:
            MetricReport.from_keyvalue("task=depth\ndelta1\n")
        assert excinfo.value.offset == 2

    def test_missing_task(self):
        with pytest.raises(FormatError):
            MetricReport.from_keyvalue("delta1=0.5\n")

    def test_table_layout(self):
        # Arrange
        report = depth_metrics(np.ones((2, 2)), np.ones((2, 2)))

        # Act
        header, row = report.to_table().splitlines()

        # Assert
        assert header.split()[:2] == ["d<1.25", "d<1.25^2"]
        assert row.split()[0] == "1.0000"

    def test_combined_report_columns(self):
        # Arrange
        gt = np.ones((2, 2))
        n = _unit_normals(7, (3, 2, 2))

        # Act
        report = combine_reports(
            Task.DEPTH_NORMALS, depth_metrics(gt, gt), normal_metrics(n, n), extra={"compat_deg": 1.5}
        )

        # Assert
        assert report.columns() == list(columns_for(Task.DEPTH_NORMALS))

    def test_ablation_table(self):
        # Arrange
        gt = np.ones((2, 2))
        rows = [("scale1", depth_metrics(2 * gt, gt)), ("scale1+2", depth_metrics(gt, gt))]

        # Act
        lines = format_ablation_table(rows).splitlines()

        # Assert
        assert len(lines) == 3
        assert lines[0].startswith("Config")
        assert lines[2].split()[:2] == ["scale1+2", "1.0000"]
        assert format_ablation_table([]) == ""
