"""The subcommands. Each returns the process exit code."""

from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import logging

from ..data.checkpoint import read_checkpoint
from ..data.dataset import generate_dataset, load_dataset
from ..data.netpbm import read_ppm, write_depth_pgm, write_labels_pgm
from ..data.sample import Prediction, Sample
from ..data.tensor_file import write_tensor
from ..data.visualize import write_visualizations
from ..errors import ConfigurationError, InputError
from ..geometry.camera import Intrinsics
from ..metrics.report import MetricReport, format_ablation_table
from ..model.network import Model, build_model
from ..project_types import Modality, Task
from ..training.evaluate import GroundTruthEcho, evaluate, predict_all
from ..training.loop import save_training_checkpoint, train, write_loss_curve
from .config import RunConfig, model_config, output_dir, resolved_text, scene_spec, train_config
from .suite import format_suite, run_suite

logger = logging.getLogger("DensePred.CLI")

DEFAULT_SCALE_SETS = "1;2;1,2;1,2,3"
CONDITIONS = {
    "a": "rgb",
    "b": "rgb+predicted depth/normals",
    "c": "rgb+true depth/normals",
}


def _echo_config(out: Path, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(text)


def _data_root(run: RunConfig) -> Path:
    root = run.get("data.root")
    if not root:
        raise ConfigurationError("A dataset is required (--data or data.root)", layer="data.root")
    return Path(root)


def _num_classes(task: Task, classes: int) -> Optional[int]:
    return classes if task is Task.SEMANTIC else None


def cmd_gen_data(run: RunConfig) -> int:
    """Generate ``data.count`` training and ``data.test_count`` test scenes.

    The test count defaults to a quarter of the training count.
    """
    out = output_dir(run, "data")
    count = run.get("data.count", 8)
    spec = scene_spec(run)
    _echo_config(out, resolved_text(run))
    meta = generate_dataset(
        out, spec, count, run.get("data.test_count", count // 4), run.get("run.workers")
    )
    print(f"Wrote {meta.train_count} train and {meta.test_count} test samples to {out}")
    return 0


def cmd_train(run: RunConfig) -> int:
    """Phase 1, then phase 2 when scale 3 is active; writes ``model.ckpt`` and ``loss.csv``."""
    out = output_dir(run, "train")
    model_cfg = model_config(run)
    train_cfg = train_config(run)
    _echo_config(out, resolved_text(run, model_cfg, train_cfg))
    dataset = load_dataset(
        _data_root(run),
        "train",
        _num_classes(model_cfg.task, model_cfg.num_classes),
        run.get("run.workers"),
    )
    model = build_model(model_cfg)
    checkpoints = out / "checkpoints" if train_cfg.checkpoint_every else None
    result = train(model, dataset, train_cfg, checkpoint_dir=checkpoints)
    save_training_checkpoint(out / "model.ckpt", model, result.state)
    write_loss_curve(out / "loss.csv", result.curve)
    final = result.curve[-1][1] if result.curve else float("nan")
    print(f"Trained {result.state.step} steps, final loss {final:.6g}; outputs in {out}")
    return 0


def write_prediction(directory: Path, stem: str, prediction: Prediction, sample: Optional[Sample] = None) -> List[Path]:
    """Prediction maps in the dataset formats plus false-colour renderings."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if prediction.depth is not None:
        written.append(directory / f"{stem}.depth.pgm")
        write_depth_pgm(written[-1], prediction.depth)
    if prediction.normals is not None:
        written.append(directory / f"{stem}.normals.tns")
        write_tensor(written[-1], prediction.normals)
    if prediction.probabilities is not None:
        written.append(directory / f"{stem}.labels.pgm")
        write_labels_pgm(written[-1], prediction.labels)
    written += write_visualizations(directory, stem, prediction, sample)
    return written


def _write_report(out: Path, name: str, report: MetricReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.txt").write_text(report.to_table())
    (out / f"{name}.kv").write_text(report.to_keyvalue())


def cmd_eval(
    run: RunConfig,
    checkpoint: Optional[str],
    split: str = "test",
    dump_predictions: bool = False,
    ground_truth_echo: bool = False,
) -> int:
    """Score a checkpoint (or the ground-truth echo) on a split.

    Writes ``report.txt`` (table) and ``report.kv`` (key-value) under the
    output directory, and with ``dump_predictions`` one prediction per sample
    under ``predictions/``.
    """
    out = output_dir(run, "eval")
    if ground_truth_echo:
        model_cfg = model_config(run)
        task, classes = model_cfg.task, model_cfg.num_classes
        predictor = GroundTruthEcho(classes)
    else:
        if not checkpoint:
            raise ConfigurationError("eval needs --checkpoint or --ground-truth-echo", layer="checkpoint")
        predictor = Model.from_checkpoint(read_checkpoint(checkpoint))
        task, classes = predictor.config.task, predictor.config.num_classes
    _echo_config(out, resolved_text(run))
    dataset = load_dataset(_data_root(run), split, _num_classes(task, classes), run.get("run.workers"))
    report = evaluate(predictor, dataset, task, classes or None)
    _write_report(out, "report", report)
    print(report.to_table(), end="")
    if dump_predictions:
        for index, (sample, prediction) in enumerate(zip(dataset, predict_all(predictor, dataset))):
            write_prediction(out / "predictions", f"{index:05d}", prediction, sample)
    return 0


def cmd_predict(run: RunConfig, checkpoint: str, image: Optional[str] = None, split: str = "test") -> int:
    """Run a checkpoint on one PPM image or on every sample of a split."""
    out = output_dir(run, "predict")
    model = Model.from_checkpoint(read_checkpoint(checkpoint))
    if image:
        rgb = read_ppm(image)
        samples = [Sample(rgb=rgb, intrinsics=Intrinsics.default_for(rgb.shape[2], rgb.shape[1]))]
        stems = [Path(image).name.split(".")[0]]
    else:
        samples = load_dataset(_data_root(run), split, workers=run.get("run.workers"))
        stems = [f"{i:05d}" for i in range(len(samples))]
    written = 0
    for stem, sample, prediction in zip(stems, samples, predict_all(model, samples)):
        written += len(write_prediction(out, stem, prediction, sample))
    print(f"Wrote {written} files for {len(samples)} samples to {out}")
    return 0


def parse_scale_sets(text: str) -> List[Tuple[int, ...]]:
    """``"1;2;1,2;1,2,3"`` to a list of scale tuples."""
    sets = []
    for part in text.split(";"):
        if part.strip():
            sets.append(tuple(int(v) for v in part.split(",")))
    return sets


def _with_donor_inputs(donor: Model, samples: Sequence[Sample]) -> List[Sample]:
    predictions = predict_all(donor, samples)
    return [s.replace(depth=p.depth, normals=p.normals) for s, p in zip(samples, predictions)]


def _ablation_row(
    run: RunConfig, train_set: Sequence[Sample], eval_set: Sequence[Sample], steps: int, **model_overrides
) -> MetricReport:
    variant = RunConfig(dict(run.values), dict(run.sources))
    for key, value in model_overrides.items():
        variant.set(key, value)
    model_cfg = model_config(variant)
    variant.set("train.phase1_steps", steps)
    variant.set("train.phase2_steps", steps // 2 if 3 in model_cfg.scales else 0)
    model = build_model(model_cfg)
    train(model, train_set, train_config(variant))
    return evaluate(model, eval_set, model_cfg.task, model_cfg.num_classes or None)


def cmd_ablate(
    run: RunConfig,
    scale_sets: Optional[str] = None,
    conditions: Optional[str] = None,
    donor: Optional[str] = None,
    steps: int = 200,
    eval_split: str = "test",
) -> int:
    """Train and score one model per scale set and input condition.

    Every row starts from the same seeds and takes ``steps`` phase-1 steps;
    rows with scale 3 add ``steps // 2`` phase-2 steps. Conditions: ``a`` RGB
    only, ``b`` RGB plus depth and normals predicted by the ``donor``
    depth+normals checkpoint, ``c`` RGB plus true depth and normals.

    Input conditions only apply to the semantic task; for depth or normals
    the extra inputs would include the target itself.

    Raises:
        ConfigurationError: On an unknown condition, conditions for a task
            other than semantic, or ``b`` without a donor.
    """
    if scale_sets is None and conditions is None:
        scale_sets = DEFAULT_SCALE_SETS
    wanted = [c.strip() for c in (conditions or "").split(",") if c.strip()]
    for condition in wanted:
        if condition not in CONDITIONS:
            raise ConfigurationError(f"Unknown condition '{condition}', expected a, b or c", layer="conditions")
    model_cfg = model_config(run)
    if wanted and model_cfg.task is not Task.SEMANTIC:
        raise ConfigurationError(
            f"Input conditions need the semantic task, got '{model_cfg.task.value}'", layer="conditions"
        )
    donor_model = None
    if "b" in wanted:
        if not donor:
            raise ConfigurationError("Condition b needs a --donor depth+normals checkpoint", layer="donor")
        donor_model = Model.from_checkpoint(read_checkpoint(donor))
        if donor_model.config.task is not Task.DEPTH_NORMALS:
            raise ConfigurationError(
                f"The donor predicts '{donor_model.config.task.value}', not depth+normals", layer="donor"
            )

    out = output_dir(run, "ablate")
    _echo_config(out, resolved_text(run, model_cfg, train_config(run)))
    root = _data_root(run)
    classes = _num_classes(model_cfg.task, model_cfg.num_classes)
    train_set = load_dataset(root, "train", classes, run.get("run.workers"))
    eval_set = load_dataset(root, eval_split, classes, run.get("run.workers"))

    rows: List[Tuple[str, MetricReport]] = []
    for scales in parse_scale_sets(scale_sets or ""):
        logger.info("Ablation row: scales %s", scales)
        report = _ablation_row(run, train_set, eval_set, steps, **{"model.scales": scales})
        rows.append((f"scales {','.join(map(str, scales))}", report))
    all_inputs = (Modality.RGB, Modality.DEPTH, Modality.NORMALS)
    for condition in wanted:
        logger.info("Ablation row: condition %s", condition)
        if condition == "a":
            report = _ablation_row(run, train_set, eval_set, steps, **{"model.inputs": (Modality.RGB,)})
        else:
            train_inputs, eval_inputs = train_set, eval_set
            if condition == "b":
                train_inputs = _with_donor_inputs(donor_model, train_set)
                eval_inputs = _with_donor_inputs(donor_model, eval_set)
            report = _ablation_row(run, train_inputs, eval_inputs, steps, **{"model.inputs": all_inputs})
        rows.append((f"({condition}) {CONDITIONS[condition]}", report))

    if not rows:
        raise InputError("Nothing to ablate: no scale sets and no conditions", field="scale_sets")
    table = format_ablation_table(rows)
    (out / "ablation.txt").write_text(table)
    print(table, end="")
    return 0


def cmd_gradcheck(cases: Optional[Sequence[str]] = None) -> int:
    """Run the gradient-check suite; exit code 1 if any case fails."""
    reports = run_suite(cases or None)
    print(format_suite(reports), end="")
    failed = [r.name for r in reports if not r.passed]
    if failed:
        logger.error("Gradient check failed for %s", ", ".join(failed))
        return 1
    return 0
