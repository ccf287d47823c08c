import numpy as np
import pytest

from densepred.cli.config import parse_run_config, train_config
from densepred.cli.main import EXIT_IO, EXIT_OK, EXIT_USAGE, main
from densepred.data import Checkpoint, encode_checkpoint
from densepred.errors import ConfigurationError, FormatError
from densepred.metrics import MetricReport
from densepred.training import read_loss_curve


def _files(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes() for p in sorted(directory.rglob("*")) if p.is_file()}


def _gen(out, *extra):
    return main(["gen-data", "--out", str(out), "--count", "4", "--test-count", "2", "--size", "16x12", "--seed", "4", *extra])


class TestRunConfig:
    """Tests for config files and their precedence."""

    def test_parse_with_comments(self):
        # Arrange
        text = "# run\nmodel.task = normals  # preset lr\ntrain.momentum = 0\ndata.size = 64x48\n\n"

        # Act
        run = parse_run_config(text)

        # Assert
        assert run.get("train.momentum") == 0.0
        assert run.get("data.size") == (48, 64)
        assert train_config(run).base_lr == pytest.approx(0.05)

    def test_unknown_key_names_the_key(self):
        with pytest.raises(ConfigurationError) as excinfo:
            parse_run_config("train.momentun = 0.5\n")
        assert excinfo.value.layer == "train.momentun"

    def test_line_without_equals(self):
        with pytest.raises(FormatError) as excinfo:
            parse_run_config("model.task = depth\nmodel.scales 1,2\n", "run.cfg")
        assert excinfo.value.offset == 2

    def test_bad_value(self):
        with pytest.raises(ConfigurationError):
            parse_run_config("train.augment = maybe\n")


class TestGenData:
    """Tests for the gen-data subcommand."""

    def test_same_seed_same_bytes(self, tmp_path):
        # Act
        first = _gen(tmp_path / "a")
        second = _gen(tmp_path / "b")

        # Assert
        assert first == second == EXIT_OK
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        a.pop("config.txt"), b.pop("config.txt")
        assert a == b
        assert "train/00003.rgb.ppm" in a and "test/00001.depth.pgm" in a

    def test_config_echo_replays_the_run(self, tmp_path):
        """The written config.txt regenerates identical data."""
        # Arrange
        _gen(tmp_path / "a")

        # Act
        code = main(["gen-data", "--config", str(tmp_path / "a" / "config.txt"), "--out", str(tmp_path / "b")])

        # Assert
        assert code == EXIT_OK
        a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert {k: v for k, v in a.items() if k != "config.txt"} == {
            k: v for k, v in b.items() if k != "config.txt"
        }
        assert "data.size = 16x12" in (tmp_path / "a" / "config.txt").read_text()

    def test_output_root_from_environment(self, tmp_path, monkeypatch):
        # Arrange
        monkeypatch.setenv("DENSEPRED_OUTPUT_ROOT", str(tmp_path))

        # Act
        code = main(["gen-data", "--count", "1", "--size", "8x6"])

        # Assert
        assert code == EXIT_OK
        assert (tmp_path / "data" / "meta.txt").exists()

    def test_zero_count_is_a_usage_error(self, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path), "--count", "0"]) == EXIT_USAGE

    @pytest.mark.parametrize("override", ["train.momentun=0", "data.count=many", "data.count"])
    def test_bad_overrides(self, override, tmp_path):
        assert main(["gen-data", "--out", str(tmp_path), "--set", override]) == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-data", "--config", str(tmp_path / "absent.cfg")]) == EXIT_IO

    def test_malformed_config_file(self, tmp_path):
        # Arrange
        path = tmp_path / "run.cfg"
        path.write_text("data.count 3\n")

        # Act / Assert
        assert main(["gen-data", "--config", str(path), "--out", str(tmp_path / "o")]) == EXIT_IO


class TestEval:
    """Tests for the eval subcommand."""

    @pytest.mark.parametrize(
        "flags, metric",
        [
            ([], "abs_rel"),
            (["--task", "normals"], "angle_mean"),
            (["--task", "semantic", "--classes", "5"], "pixel_acc"),
        ],
    )
    def test_ground_truth_echo_scores_perfectly(self, flags, metric, tmp_path):
        # Arrange
        _gen(tmp_path / "data")
        out = tmp_path / "eval"

        # Act
        code = main(
            ["eval", "--ground-truth-echo", "--data", str(tmp_path / "data"), "--out", str(out), *flags]
        )

        # Assert
        assert code == EXIT_OK
        report = MetricReport.from_keyvalue((out / "report.kv").read_text())
        expected = 1.0 if metric == "pixel_acc" else 0.0
        assert report[metric] == pytest.approx(expected, abs=1e-5)
        assert (out / "report.txt").exists()

    def test_needs_a_checkpoint(self, tmp_path):
        _gen(tmp_path / "data")
        assert main(["eval", "--data", str(tmp_path / "data"), "--out", str(tmp_path / "e")]) == EXIT_USAGE

    def test_needs_a_dataset(self, tmp_path):
        assert main(["eval", "--ground-truth-echo", "--out", str(tmp_path)]) == EXIT_USAGE

    @pytest.mark.parametrize(
        "content",
        [
            b"not a checkpoint",
            encode_checkpoint(Checkpoint({}, {"t": np.zeros(1)})).replace(b"\x01\x00t", b"\x01\x00\xff"),
        ],
    )
    def test_corrupt_checkpoint(self, content, tmp_path):
        # Arrange
        _gen(tmp_path / "data")
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(content)

        # Act / Assert
        assert main(["eval", "--checkpoint", str(bad), "--data", str(tmp_path / "data")]) == EXIT_IO


class TestTrainPipeline:
    """gen-data, train, eval and predict on the tiny preset."""

    def test_end_to_end(self, tmp_path, capsys):
        # Arrange
        data, run = tmp_path / "data", tmp_path / "run"
        assert main(["gen-data", "--preset", "tiny", "--count", "4", "--seed", "1", "--out", str(data)]) == EXIT_OK

        # Act
        trained = main(
            [
                "train", "--preset", "tiny", "--data", str(data), "--out", str(run),
                "--phase1-steps", "2", "--phase2-steps", "1", "--batch-size", "2", "--quiet",
            ]
        )
        evaluated = main(
            ["eval", "--checkpoint", str(run / "model.ckpt"), "--data", str(data), "--out", str(tmp_path / "eval"),
             "--dump-predictions"]
        )
        predicted = main(
            ["predict", "--checkpoint", str(run / "model.ckpt"), "--data", str(data), "--out", str(tmp_path / "pred")]
        )

        # Assert
        assert (trained, evaluated, predicted) == (EXIT_OK, EXIT_OK, EXIT_OK)
        curve = read_loss_curve(run / "loss.csv")
        assert [step for step, _, _ in curve] == [1, 2, 3]
        assert all(np.isfinite(loss) for _, loss, _ in curve)
        assert "train.phase1_steps = 2" in (run / "config.txt").read_text()
        assert (tmp_path / "eval" / "predictions" / "00000.depth.pgm").exists()
        assert (tmp_path / "pred" / "00000.depth.vis.ppm").exists()
        assert "Trained 3 steps" in capsys.readouterr().out

    def test_unknown_preset(self, tmp_path):
        assert main(["train", "--preset", "huge", "--out", str(tmp_path)]) == EXIT_USAGE


class TestAblateAndGradcheck:
    def test_unknown_condition(self, tmp_path):
        assert main(["ablate", "--conditions", "z", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_condition_b_needs_a_donor(self, tmp_path):
        code = main(["ablate", "--task", "semantic", "--classes", "5", "--conditions", "a,b", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    @pytest.mark.parametrize("task", ["depth", "normals", "depth+normals"])
    def test_conditions_need_the_semantic_task(self, task, tmp_path):
        """True depth and normals as inputs would hand these tasks their own targets."""
        # Arrange
        _gen(tmp_path / "data")

        # Act
        code = main(
            ["ablate", "--task", task, "--conditions", "a,c", "--data", str(tmp_path / "data"),
             "--out", str(tmp_path / "ablate")]
        )

        # Assert
        assert code == EXIT_USAGE
        assert not (tmp_path / "ablate" / "ablation.txt").exists()

    def test_semantic_conditions_table(self, tmp_path, capsys):
        # Arrange
        data, out = tmp_path / "data", tmp_path / "ablate"
        main(["gen-data", "--preset", "tiny", "--count", "4", "--classes", "5", "--seed", "2", "--out", str(data)])

        # Act
        code = main(
            ["ablate", "--preset", "tiny", "--task", "semantic", "--classes", "5", "--conditions", "a,c",
             "--steps", "2", "--data", str(data), "--out", str(out), "--quiet"]
        )

        # Assert
        assert code == EXIT_OK
        lines = (out / "ablation.txt").read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("Config")
        assert lines[1].startswith("(a) rgb ")
        assert lines[2].startswith("(c) rgb+true depth/normals")
        assert capsys.readouterr().out.splitlines() == lines

    def test_gradcheck_single_case(self, capsys):
        # Act
        code = main(["gradcheck", "--case", "relu", "--case", "softmax_channels"])

        # Assert
        lines = capsys.readouterr().out.splitlines()
        assert code == EXIT_OK
        assert len(lines) == 3
        assert all(line.split()[-1] == "ok" for line in lines[1:])

    def test_gradcheck_unknown_case(self):
        assert main(["gradcheck", "--case", "no_such_op"]) == EXIT_USAGE
