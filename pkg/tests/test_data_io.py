import struct

import numpy as np
import pytest

from densepred.data import (
    Checkpoint,
    DatasetMeta,
    Prediction,
    SceneSpec,
    colorize_depth,
    colorize_labels,
    decode_checkpoint,
    decode_tensor,
    encode_checkpoint,
    encode_tensor,
    generate_dataset,
    generate_samples,
    load_dataset,
    read_checkpoint,
    read_depth_pgm,
    read_labels_pgm,
    read_pgm,
    read_ppm,
    read_tensor,
    write_checkpoint,
    write_depth_pgm,
    write_pgm,
    write_ppm,
    write_tensor,
    write_visualizations,
)
from densepred.data.dataset import ordered_map
from densepred.errors import FormatError, InputError
from densepred.geometry import Intrinsics
from densepred.tensor import Tensor


class TestTensorFile:
    """Tests for the binary tensor container."""

    def test_header_layout(self):
        # Act
        encoded = encode_tensor(np.zeros((2, 3)))

        # Assert
        assert encoded[:7] == b"PMTN\x01\x01\x02"
        assert struct.unpack_from("<2I", encoded, 7) == (2, 3)
        assert len(encoded) == 7 + 8 + 6 * 8

    @pytest.mark.parametrize(
        "array",
        [
            np.arange(24.0).reshape(2, 3, 4),
            np.array(3.5, dtype=np.float32),
            np.arange(6, dtype=np.uint16).reshape(1, 1, 2, 3) * 1000,
        ],
    )
    def test_file_round_trip(self, array, tmp_path):
        # Arrange
        path = tmp_path / "a.tns"

        # Act
        write_tensor(path, array)
        restored = read_tensor(path)

        # Assert
        assert restored.dtype == array.dtype
        np.testing.assert_array_equal(restored, array)

    def test_tensor_written_reads_back_as_array(self, tmp_path):
        """A Tensor is stored by value and comes back as a plain float64 array."""
        # Arrange
        path = tmp_path / "t.tns"
        tensor = Tensor(np.random.default_rng(0).standard_normal((1, 3, 4, 5)), requires_grad=True)

        # Act
        write_tensor(path, tensor)
        restored = read_tensor(path)

        # Assert
        assert type(restored) is np.ndarray
        assert restored.dtype == np.float64
        np.testing.assert_array_equal(Tensor(restored).data, tensor.data)

    def test_records_decode_back_to_back(self):
        # Arrange
        buffer = encode_tensor(np.ones(2)) + encode_tensor(np.zeros((1, 1), dtype=np.uint8))

        # Act
        first, end = decode_tensor(buffer)
        second, last = decode_tensor(buffer, end)

        # Assert
        np.testing.assert_array_equal(first, [1.0, 1.0])
        assert second.dtype == np.uint8
        assert last == len(buffer)

    def test_unsupported_dtype(self):
        with pytest.raises(FormatError):
            encode_tensor(np.zeros(3, dtype=np.int32))

    def test_rank_above_four(self):
        with pytest.raises(FormatError):
            encode_tensor(np.zeros((1, 1, 1, 1, 1)))

    @pytest.mark.parametrize(
        "patch, offset",
        [
            ((0, b"XMTN"), 0),
            ((4, b"\x02"), 4),
            ((5, b"\x09"), 5),
            ((6, b"\x05"), 6),
        ],
    )
    def test_corrupted_header(self, patch, offset):
        """Each header field is checked and the error points at its byte."""
        # Arrange
        buffer = bytearray(encode_tensor(np.ones((2, 2))))
        at, replacement = patch
        buffer[at : at + len(replacement)] = replacement

        # Act / Assert
        with pytest.raises(FormatError) as excinfo:
            decode_tensor(bytes(buffer))
        assert excinfo.value.offset == offset

    def test_truncated_payload(self):
        buffer = encode_tensor(np.ones((2, 2)))
        with pytest.raises(FormatError) as excinfo:
            decode_tensor(buffer[:-1])
        assert excinfo.value.offset == 7 + 8

    def test_trailing_bytes(self, tmp_path):
        # Arrange
        path = tmp_path / "a.tns"
        path.write_bytes(encode_tensor(np.ones(2)) + b"\x00")

        # Act / Assert
        with pytest.raises(FormatError):
            read_tensor(path)


class TestNetpbm:
    """Tests for the pixmap and graymap codecs."""

    def test_pixmap_round_trip(self, tmp_path):
        # Arrange
        rgb = np.random.default_rng(0).integers(0, 256, (3, 4, 5)) / 255.0
        path = tmp_path / "a.ppm"

        # Act
        write_ppm(path, rgb)

        # Assert
        np.testing.assert_array_equal(read_ppm(path), rgb)
        assert path.read_bytes().startswith(b"P6\n5 4\n255\n")

    def test_sixteen_bit_samples_are_big_endian(self, tmp_path):
        # Arrange
        path = tmp_path / "a.pgm"

        # Act
        write_pgm(path, np.array([[258]]), maxval=65535)

        # Assert
        assert path.read_bytes().endswith(b"\x01\x02")
        assert read_pgm(path)[0, 0] == 258

    def test_header_comments_are_skipped(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\x07")
        np.testing.assert_array_equal(read_pgm(path), [[0, 7]])

    @pytest.mark.parametrize(
        "content",
        [b"P6\n2 1\n255\n\x00\x07", b"P5\n2 1\n255\n\x00", b"P5\n2 1\n7\n\x00\x08", b"P5\n2 x\n255\n"],
    )
    def test_malformed_graymaps(self, content, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(content)
        with pytest.raises(FormatError):
            read_pgm(path)

    def test_depth_in_millimetres(self, tmp_path):
        # Arrange
        depth = np.array([[0.0, 1.2344, 19.9996]])
        path = tmp_path / "d.pgm"

        # Act
        write_depth_pgm(path, depth)

        # Assert
        np.testing.assert_allclose(read_depth_pgm(path), [[0.0, 1.234, 20.0]])

    def test_label_range_is_checked(self, tmp_path):
        # Arrange
        path = tmp_path / "l.pgm"
        write_pgm(path, np.array([[0, 5]]))

        # Act / Assert
        with pytest.raises(InputError):
            read_labels_pgm(path, num_classes=5)
        assert read_labels_pgm(path, num_classes=6).max() == 5

    def test_negative_values(self, tmp_path):
        with pytest.raises(InputError):
            write_pgm(tmp_path / "n.pgm", np.array([[-1]]))


class TestCheckpoint:
    """Tests for the checkpoint container."""

    def test_round_trip(self, tmp_path):
        # Arrange
        checkpoint = Checkpoint(
            {"model.task": "depth", "note": "a=b"},
            {"param/1.1.weight": np.arange(6.0).reshape(2, 3), "mask": np.ones(2, dtype=np.uint8)},
        )
        path = tmp_path / "nested" / "x.ckpt"

        # Act
        write_checkpoint(path, checkpoint)
        restored = read_checkpoint(path)

        # Assert
        assert restored.entries == checkpoint.entries
        assert list(restored.tensors) == list(checkpoint.tensors)
        np.testing.assert_array_equal(restored.tensors["param/1.1.weight"], np.arange(6.0).reshape(2, 3))

    def test_bad_magic(self):
        with pytest.raises(FormatError) as excinfo:
            decode_checkpoint(b"PMTN\x01" + b"\x00" * 8)
        assert excinfo.value.offset == 0

    def test_trailing_bytes(self):
        buffer = encode_checkpoint(Checkpoint({"a": "1"}, {"t": np.zeros(1)}))
        with pytest.raises(FormatError):
            decode_checkpoint(buffer + b"\x00")

    def test_truncated(self):
        buffer = encode_checkpoint(Checkpoint({"a": "1"}, {"t": np.zeros(4)}))
        with pytest.raises(FormatError):
            decode_checkpoint(buffer[:-3])

    def test_tensor_name_is_not_utf8(self):
        """A corrupt name is a format error pointing at the name's first byte."""
        # Arrange
        buffer = bytearray(encode_checkpoint(Checkpoint({"a": "1"}, {"t": np.zeros(1)})))
        name_at = 4 + 1 + 4 + len(b"a=1\n") + 4 + 2
        assert buffer[name_at : name_at + 1] == b"t"
        buffer[name_at] = 0xFF

        # Act / Assert
        with pytest.raises(FormatError) as excinfo:
            decode_checkpoint(bytes(buffer))
        assert excinfo.value.offset == name_at

    def test_name_longer_than_the_file(self):
        # Arrange
        buffer = bytearray(encode_checkpoint(Checkpoint({}, {"t": np.zeros(1)})))
        name_length_at = 4 + 1 + 4 + 4
        buffer[name_length_at : name_length_at + 2] = struct.pack("<H", 60000)

        # Act / Assert
        with pytest.raises(FormatError) as excinfo:
            decode_checkpoint(bytes(buffer))
        assert excinfo.value.offset == name_length_at + 2


class TestDataset:
    """Tests for generated dataset directories."""

    SPEC = SceneSpec(seed=10, size=(12, 16))

    def test_generation_is_deterministic(self):
        first = generate_samples(self.SPEC, [10, 11])
        second = generate_samples(self.SPEC, [10, 11], workers=1)
        assert [s.digest() for s in first] == [s.digest() for s in second]

    def test_write_then_load(self, tmp_path):
        # Arrange
        meta = generate_dataset(tmp_path, self.SPEC, train_count=3, test_count=2)

        # Act
        train = load_dataset(tmp_path, "train")
        test = load_dataset(tmp_path, "test")
        expected = generate_samples(self.SPEC, meta.seed_range("train"))

        # Assert
        assert (len(train), len(test)) == (3, 2)
        for loaded, original in zip(train, expected):
            np.testing.assert_array_equal(loaded.rgb, original.rgb)
            np.testing.assert_array_equal(loaded.mask, original.mask)
            np.testing.assert_array_equal(loaded.labels, original.labels)
            np.testing.assert_array_equal(loaded.normals, original.normals)
            np.testing.assert_allclose(loaded.depth, original.depth, atol=5e-4 + 1e-9)
            assert loaded.intrinsics == original.intrinsics

    def test_splits_use_disjoint_seeds(self, tmp_path):
        # Act
        meta = generate_dataset(tmp_path, self.SPEC, train_count=3, test_count=2)

        # Assert
        assert list(meta.seed_range("train")) == [10, 11, 12]
        assert list(meta.seed_range("test")) == [13, 14]
        train = {s.digest() for s in load_dataset(tmp_path, "train")}
        test = {s.digest() for s in load_dataset(tmp_path, "test")}
        assert not train & test

    def test_meta_text(self, tmp_path):
        # Arrange
        meta = DatasetMeta((12, 16), Intrinsics.default_for(16, 12), 5, 10, 3, 2)

        # Act
        meta.save(tmp_path)
        restored = DatasetMeta.load(tmp_path)

        # Assert
        assert restored == meta
        assert "train_seeds=10..12" in meta.to_text()
        assert "size=16x12" in meta.to_text()

    def test_meta_missing_key(self):
        with pytest.raises(FormatError):
            DatasetMeta.from_text("size=16x12\nfx=16.0\n")

    def test_unknown_split(self):
        meta = DatasetMeta((12, 16), Intrinsics.default_for(16, 12), 5, 10, 3, 2)
        with pytest.raises(InputError):
            meta.seed_range("validation")

    def test_needs_a_training_sample(self, tmp_path):
        with pytest.raises(InputError):
            generate_dataset(tmp_path, self.SPEC, train_count=0)

    def test_empty_split(self, tmp_path):
        (tmp_path / "train").mkdir()
        with pytest.raises(InputError):
            load_dataset(tmp_path, "train")

    def test_ordered_map_keeps_order(self):
        assert ordered_map(lambda x: x * x, range(10), workers=4) == [x * x for x in range(10)]


class TestVisualize:
    def test_depth_colours_span_the_range(self):
        # Arrange
        depth = np.array([[1.0, 3.0, 0.0]])

        # Act
        rgb = colorize_depth(depth)

        # Assert
        np.testing.assert_allclose(rgb[:, 0, 0], [0.27, 0.00, 0.33])
        np.testing.assert_allclose(rgb[:, 0, 1], [0.99, 0.91, 0.14])
        assert np.all(rgb[:, 0, 2] == 0.0)

    def test_labels_cycle_the_palette(self):
        rgb = colorize_labels(np.array([[1, 9]]))
        np.testing.assert_array_equal(rgb[:, 0, 0], rgb[:, 0, 1])

    def test_writes_one_file_per_map(self, tmp_path):
        # Arrange
        prediction = Prediction(depth=np.ones((2, 3)), probabilities=np.zeros((2, 2, 3)))

        # Act
        written = write_visualizations(tmp_path, "00000", prediction)

        # Assert
        assert [p.name for p in written] == ["00000.depth.vis.ppm", "00000.labels.vis.ppm"]
        assert read_ppm(written[0]).shape == (3, 2, 3)
