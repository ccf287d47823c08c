import math

import numpy as np
import pytest

from densepred.errors import ConfigurationError, FormatError, InputError
from densepred.losses import (
    ClassWeights,
    depth_loss,
    depth_normals_loss,
    median_freq_weights,
    normals_loss,
    semantic_loss,
)
from densepred.tensor import Tensor, parameter


def _logdepth(target: np.ndarray, offset=0.0) -> Tensor:
    return parameter(np.log(target)[:, None] + offset, "pred")


class TestDepthLoss:
    """Tests for the scale-invariant log-depth loss."""

    def test_constant_log_offset(self):
        """A uniform log offset c costs c^2 / 2: half of it is forgiven."""
        # Arrange
        target = np.full((1, 3, 4), 2.0)
        mask = np.ones((1, 3, 4), dtype=bool)

        # Act
        loss = depth_loss(_logdepth(target, offset=0.3), target, mask)

        # Assert
        assert loss.item() == pytest.approx(0.045)

    def test_exact_prediction_costs_nothing(self):
        target = np.random.default_rng(0).uniform(1.0, 5.0, (2, 4, 5))
        loss = depth_loss(_logdepth(target), target, np.ones((2, 4, 5), dtype=bool))
        assert loss.item() == pytest.approx(0.0, abs=1e-12)

    def test_gradient_term_by_hand(self):
        """d = [0, 1] on a 1x2 image: 1/2 - 1/8 + 1/2."""
        # Arrange
        target = np.ones((1, 1, 2))
        pred = Tensor(np.array([[[[0.0, 1.0]]]]))

        # Act
        loss = depth_loss(pred, target, np.ones((1, 1, 2), dtype=bool))

        # Assert
        assert loss.item() == pytest.approx(0.875)

    def test_gradient_pairs_need_both_pixels_valid(self):
        # Arrange
        target = np.ones((1, 1, 3))
        pred = Tensor(np.array([[[[0.0, 1.0, 5.0]]]]))
        mask = np.array([[[True, True, False]]])

        # Act
        loss = depth_loss(pred, target, mask)

        # Assert
        assert loss.item() == pytest.approx(0.875)

    def test_masked_pixels_get_zero_gradient(self):
        # Arrange
        rng = np.random.default_rng(1)
        target = rng.uniform(1.0, 3.0, (2, 4, 4))
        mask = rng.random((2, 4, 4)) > 0.4
        mask[:, 0, 0] = True
        pred = parameter(rng.standard_normal((2, 1, 4, 4)), "pred")

        # Act
        depth_loss(pred, target, mask).backward()

        # Assert
        assert np.all(pred.grad[:, 0][~mask] == 0.0)
        assert np.any(pred.grad[:, 0][mask] != 0.0)

    def test_images_without_valid_pixels_are_skipped(self):
        """Batches average over the images that have a valid pixel."""
        # Arrange
        rng = np.random.default_rng(2)
        target = rng.uniform(1.0, 3.0, (2, 3, 3))
        pred = rng.standard_normal((2, 1, 3, 3))
        mask = np.ones((2, 3, 3), dtype=bool)
        mask[1] = False

        # Act
        both = depth_loss(Tensor(pred), target, mask).item()
        first = depth_loss(Tensor(pred[:1]), target[:1], mask[:1]).item()

        # Assert
        assert both == pytest.approx(first)

    def test_empty_mask(self):
        with pytest.raises(InputError):
            depth_loss(Tensor(np.zeros((1, 1, 2, 2))), np.ones((1, 2, 2)), np.zeros((1, 2, 2), dtype=bool))

    def test_nonpositive_target(self):
        target = np.array([[[1.0, 0.0]]])
        with pytest.raises(InputError) as excinfo:
            depth_loss(Tensor(np.zeros((1, 1, 1, 2))), target, np.ones((1, 1, 2), dtype=bool))
        assert excinfo.value.field == "depth"


class TestNormalsLoss:
    """Tests for the negative-dot-product normals loss."""

    def test_aligned_and_opposite(self):
        # Arrange
        rng = np.random.default_rng(3)
        n = rng.standard_normal((2, 3, 3, 4))
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        mask = np.ones((2, 3, 4), dtype=bool)

        # Act
        aligned = normals_loss(Tensor(n), n, mask).item()
        opposite = normals_loss(Tensor(-n), n, mask).item()

        # Assert
        assert aligned == pytest.approx(-1.0)
        assert opposite == pytest.approx(1.0)

    def test_perpendicular(self):
        pred = np.zeros((1, 3, 1, 1))
        pred[0, 0] = 1.0
        truth = np.zeros((1, 3, 1, 1))
        truth[0, 2] = 1.0
        loss = normals_loss(Tensor(pred), truth, np.ones((1, 1, 1), dtype=bool))
        assert loss.item() == pytest.approx(0.0)

    def test_shape_mismatch(self):
        with pytest.raises(InputError):
            normals_loss(Tensor(np.ones((1, 3, 2, 2))), np.ones((1, 3, 2, 3)), np.ones((1, 2, 2), dtype=bool))


class TestSemanticLoss:
    """Tests for the pixel-wise cross-entropy."""

    def test_uniform_scores_cost_log_k(self):
        # Arrange
        scores = Tensor(np.zeros((2, 4, 3, 3)))
        labels = np.random.default_rng(4).integers(0, 4, (2, 3, 3))

        # Act
        loss = semantic_loss(scores, labels, np.ones((2, 3, 3), dtype=bool))

        # Assert
        assert loss.item() == pytest.approx(math.log(4))

    def test_class_weights_scale_the_loss(self):
        """The weighted form still divides by the pixel count."""
        # Arrange
        scores = Tensor(np.zeros((1, 2, 2, 2)))
        labels = np.zeros((1, 2, 2), dtype=int)

        # Act
        loss = semantic_loss(scores, labels, np.ones((1, 2, 2), dtype=bool), ClassWeights(np.array([2.0, 1.0])))

        # Assert
        assert loss.item() == pytest.approx(2.0 * math.log(2))

    def test_out_of_range_label(self):
        with pytest.raises(InputError):
            semantic_loss(Tensor(np.zeros((1, 2, 1, 2))), np.array([[[0, 2]]]), np.ones((1, 1, 2), dtype=bool))

    def test_invalid_pixels_may_hold_any_label(self):
        loss = semantic_loss(
            Tensor(np.zeros((1, 2, 1, 2))), np.array([[[0, 9]]]), np.array([[[True, False]]])
        )
        assert loss.item() == pytest.approx(math.log(2))

    def test_weight_count_must_match(self):
        with pytest.raises(ConfigurationError):
            semantic_loss(
                Tensor(np.zeros((1, 3, 1, 1))), np.zeros((1, 1, 1), dtype=int), np.ones((1, 1, 1), dtype=bool), ClassWeights.uniform(2)
            )


def _depth_loss_loop(pred, target, mask):
    losses = []
    n_img, h, w = mask.shape
    for i in range(n_img):

        def d(y, x):
            return pred[i, y, x] - math.log(target[i, y, x])

        n, total, squares, pairs = 0, 0.0, 0.0, 0.0
        for y in range(h):
            for x in range(w):
                if not mask[i, y, x]:
                    continue
                n += 1
                total += d(y, x)
                squares += d(y, x) ** 2
                if x + 1 < w and mask[i, y, x + 1]:
                    pairs += (d(y, x + 1) - d(y, x)) ** 2
                if y + 1 < h and mask[i, y + 1, x]:
                    pairs += (d(y + 1, x) - d(y, x)) ** 2
        if n:
            losses.append(squares / n - total**2 / (2 * n * n) + pairs / n)
    return sum(losses) / len(losses)


def _normals_loss_loop(pred, target, mask):
    losses = []
    n_img, h, w = mask.shape
    for i in range(n_img):
        n, dots = 0, 0.0
        for y in range(h):
            for x in range(w):
                if mask[i, y, x]:
                    n += 1
                    dots += sum(pred[i, c, y, x] * target[i, c, y, x] for c in range(3))
        if n:
            losses.append(-dots / n)
    return sum(losses) / len(losses)


def _semantic_loss_loop(scores, labels, mask, alpha):
    losses = []
    n_img, k, h, w = scores.shape
    for i in range(n_img):
        n, total = 0, 0.0
        for y in range(h):
            for x in range(w):
                if not mask[i, y, x]:
                    continue
                n += 1
                top = max(scores[i, c, y, x] for c in range(k))
                log_sum = top + math.log(sum(math.exp(scores[i, c, y, x] - top) for c in range(k)))
                c = labels[i, y, x]
                total += alpha[c] * (scores[i, c, y, x] - log_sum)
        if n:
            losses.append(-total / n)
    return sum(losses) / len(losses)


def _unit(rng, shape):
    n = rng.standard_normal(shape)
    return n / np.linalg.norm(n, axis=1, keepdims=True)


class TestLossesAgainstLoops:
    """The vectorised losses agree with per-pixel loops and keep their bounds."""

    @pytest.mark.parametrize("seed", range(5))
    def test_depth_matches_loop(self, seed):
        # Arrange
        rng = np.random.default_rng(seed)
        target = rng.uniform(0.5, 10.0, (2, 12, 16))
        pred = rng.normal(1.0, 1.0, (2, 12, 16))
        mask = rng.random((2, 12, 16)) > 0.3

        # Act
        loss = depth_loss(Tensor(pred[:, None]), target, mask).item()

        # Assert
        assert loss == pytest.approx(_depth_loss_loop(pred, target, mask), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_normals_matches_loop(self, seed):
        # Arrange
        rng = np.random.default_rng(seed)
        pred = _unit(rng, (2, 3, 12, 16))
        target = _unit(rng, (2, 3, 12, 16))
        mask = rng.random((2, 12, 16)) > 0.3

        # Act
        loss = normals_loss(Tensor(pred), target, mask).item()

        # Assert
        assert loss == pytest.approx(_normals_loss_loop(pred, target, mask), abs=1e-12)

    @pytest.mark.parametrize("weighted", [False, True])
    @pytest.mark.parametrize("seed", range(3))
    def test_semantic_matches_loop(self, seed, weighted):
        # Arrange
        rng = np.random.default_rng(seed)
        scores = rng.normal(0.0, 3.0, (2, 5, 12, 16))
        labels = rng.integers(0, 5, (2, 12, 16))
        mask = rng.random((2, 12, 16)) > 0.3
        alpha = rng.uniform(0.2, 3.0, 5) if weighted else np.ones(5)
        weights = ClassWeights(alpha) if weighted else None

        # Act
        loss = semantic_loss(Tensor(scores), labels, mask, weights).item()

        # Assert
        assert loss == pytest.approx(_semantic_loss_loop(scores, labels, mask, alpha), abs=1e-12)

    def test_depth_is_never_negative(self):
        # Arrange
        rng = np.random.default_rng(6)

        # Act / Assert
        for _ in range(10_000):
            target = rng.uniform(0.1, 20.0, (1, 3, 4))
            pred = rng.normal(0.0, 2.0, (1, 1, 3, 4))
            mask = rng.random((1, 3, 4)) > 0.5
            mask.flat[rng.integers(12)] = True
            assert depth_loss(Tensor(pred), target, mask).item() >= 0.0

    @pytest.mark.parametrize("shift", [-2.0, 0.7, 5.0])
    def test_depth_ignores_a_shared_log_shift(self, shift):
        """Adding c to the prediction and to log(target) leaves d unchanged."""
        # Arrange
        rng = np.random.default_rng(7)
        target = rng.uniform(0.5, 10.0, (2, 6, 8))
        pred = rng.standard_normal((2, 1, 6, 8))
        mask = rng.random((2, 6, 8)) > 0.2

        # Act
        base = depth_loss(Tensor(pred), target, mask).item()
        shifted = depth_loss(Tensor(pred + shift), target * math.exp(shift), mask).item()

        # Assert
        assert shifted == pytest.approx(base, abs=1e-12)

    def test_normals_stay_within_bounds(self):
        # Arrange
        rng = np.random.default_rng(8)

        # Act / Assert
        for _ in range(1000):
            pred = _unit(rng, (2, 3, 3, 4))
            target = _unit(rng, (2, 3, 3, 4))
            mask = rng.random((2, 3, 4)) > 0.5
            mask[:, 0, 0] = True
            assert -1.0 <= normals_loss(Tensor(pred), target, mask).item() <= 1.0
            assert normals_loss(Tensor(target), target, mask).item() == pytest.approx(-1.0, abs=1e-12)

    def test_unit_weights_match_unweighted_exactly(self):
        # Arrange
        rng = np.random.default_rng(9)
        scores = Tensor(rng.standard_normal((2, 4, 5, 5)))
        labels = rng.integers(0, 4, (2, 5, 5))
        mask = rng.random((2, 5, 5)) > 0.3

        # Act
        weighted = semantic_loss(scores, labels, mask, ClassWeights.uniform(4)).item()
        plain = semantic_loss(scores, labels, mask).item()

        # Assert
        assert weighted == plain

    @pytest.mark.parametrize("loss_name", ["normals", "semantic"])
    def test_masked_pixels_get_zero_gradient(self, loss_name):
        # Arrange
        rng = np.random.default_rng(10)
        mask = rng.random((2, 4, 4)) > 0.4
        mask[:, 0, 0] = True
        if loss_name == "normals":
            pred = parameter(_unit(rng, (2, 3, 4, 4)), "pred")
            loss = normals_loss(pred, _unit(rng, (2, 3, 4, 4)), mask)
        else:
            pred = parameter(rng.standard_normal((2, 3, 4, 4)), "pred")
            loss = semantic_loss(pred, rng.integers(0, 3, (2, 4, 4)), mask)

        # Act
        loss.backward()

        # Assert
        channels_last = np.moveaxis(pred.grad, 1, -1)
        assert np.all(channels_last[~mask] == 0.0)
        assert np.any(channels_last[mask] != 0.0)


class TestJointLoss:
    def test_is_the_sum_of_both_losses(self):
        # Arrange
        rng = np.random.default_rng(5)
        depth = rng.uniform(1.0, 4.0, (1, 3, 3))
        normals = rng.standard_normal((1, 3, 3, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        mask = np.ones((1, 3, 3), dtype=bool)
        pred = rng.standard_normal((1, 4, 3, 3))

        # Act
        joint = depth_normals_loss(Tensor(pred), depth, normals, mask).item()
        separate = depth_loss(Tensor(pred[:, :1]), depth, mask).item() + normals_loss(
            Tensor(pred[:, 1:]), normals, mask
        ).item()

        # Assert
        assert joint == pytest.approx(separate)


class TestClassWeights:
    """Tests for median-frequency balancing and the weights file."""

    def test_median_frequency_by_hand(self):
        # Arrange
        mask = np.ones((2, 2), dtype=bool)
        images = [
            (np.array([[0, 0], [0, 1]]), mask),
            (np.array([[0, 0], [2, 2]]), mask),
        ]

        # Act
        weights = median_freq_weights(images, 3)

        # Assert
        np.testing.assert_allclose(weights.weights, [0.8, 2.0, 1.0])

    def test_absent_class_warns_and_gets_zero(self):
        # Arrange
        images = [(np.array([[0, 1]]), np.ones((1, 2), dtype=bool))]

        # Act
        with pytest.warns(UserWarning, match="never occur"):
            weights = median_freq_weights(images, 3)

        # Assert
        assert weights[2] == 0.0
        assert weights[0] == weights[1] == 1.0

    def test_masked_pixels_do_not_count(self):
        images = [(np.array([[0, 1, 1]]), np.array([[True, True, False]]))]
        weights = median_freq_weights(images, 2)
        np.testing.assert_allclose(weights.weights, [1.0, 1.0])

    def test_empty_dataset(self):
        with pytest.raises(InputError):
            median_freq_weights([], 3)

    def test_file_round_trip(self, tmp_path):
        # Arrange
        weights = ClassWeights(np.array([0.25, 1.0, 3.5]))
        path = tmp_path / "weights.txt"

        # Act
        weights.save(path)
        restored = ClassWeights.load(path)

        # Assert
        np.testing.assert_array_equal(restored.weights, weights.weights)

    def test_malformed_file(self, tmp_path):
        # Arrange
        path = tmp_path / "weights.txt"
        path.write_text("0 1.0\n1 heavy\n")

        # Act / Assert
        with pytest.raises(FormatError) as excinfo:
            ClassWeights.load(path)
        assert excinfo.value.offset == 2

    def test_negative_weights_rejected(self):
        with pytest.raises(ConfigurationError):
            ClassWeights(np.array([1.0, -0.5]))
