"""``densepred`` command-line entry point.

Exit codes: 0 success, 1 verification failure or training error, 2 usage or
configuration error, 3 I/O or file-format error.
"""

from typing import List, Optional

import argparse
import logging
import sys

from ..errors import (
    ConfigurationError,
    FormatError,
    InputError,
    NotRegisteredError,
    TrainingError,
)
from . import commands
from .config import RunConfig, load_run_config

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3

SEED_KEYS = ("model.seed", "train.seed", "data.seed")
CLASS_KEYS = ("model.classes", "data.classes")

logger = logging.getLogger("DensePred.CLI")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Run configuration file (section.key = value lines)")
    common.add_argument("--out", dest="run.out", help="Output directory")
    common.add_argument("--seed", type=int, help="Seed for the model, training and data")
    common.add_argument("--workers", dest="run.workers", help="Thread pool size for data work")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override any configuration key, e.g. --set train.momentum=0",
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    verbosity.add_argument("--quiet", action="store_true", help="Log warnings and errors only")
    return common


def _model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", dest="model.preset", help="canonical, desk or tiny")
    parser.add_argument("--task", dest="model.task", help="depth, normals, semantic or depth+normals")
    parser.add_argument("--classes", type=int, help="Class count K")
    parser.add_argument("--scales", dest="model.scales", help="Active scales, e.g. 1,2,3")
    parser.add_argument("--data", dest="data.root", help="Dataset root")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="densepred",
        description="Multi-scale depth, normals and semantic label prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[common], help="Generate a synthetic dataset")
    gen.add_argument("--count", dest="data.count", help="Training samples")
    gen.add_argument("--test-count", dest="data.test_count", help="Test samples")
    gen.add_argument("--size", dest="data.size", help="Image size WxH")
    gen.add_argument("--classes", type=int, help="Class count K")
    gen.add_argument("--preset", dest="model.preset", help="Model preset whose input size is used")

    tr = sub.add_parser("train", parents=[common], help="Train a model")
    _model_flags(tr)
    tr.add_argument("--reweight", dest="train.reweight", help="none or median-freq")
    tr.add_argument("--batch-size", dest="train.batch_size")
    tr.add_argument("--base-lr", dest="train.base_lr")
    tr.add_argument("--phase1-steps", dest="train.phase1_steps")
    tr.add_argument("--phase2-steps", dest="train.phase2_steps")
    tr.add_argument("--checkpoint-every", dest="train.checkpoint_every")
    tr.add_argument("--no-augment", dest="train.augment", action="store_const", const="false")

    ev = sub.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    _model_flags(ev)
    ev.add_argument("--checkpoint", help="Checkpoint to evaluate")
    ev.add_argument("--split", default="test")
    ev.add_argument("--dump-predictions", action="store_true")
    ev.add_argument(
        "--ground-truth-echo",
        action="store_true",
        help="Score the ground truth against itself instead of a checkpoint",
    )

    pr = sub.add_parser("predict", parents=[common], help="Write predictions of a checkpoint")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--data", dest="data.root", help="Dataset root")
    pr.add_argument("--split", default="test")
    pr.add_argument("--image", help="Single PPM image instead of a dataset split")

    ab = sub.add_parser("ablate", parents=[common], help="Compare scale sets and input conditions")
    _model_flags(ab)
    ab.add_argument("--scale-sets", help=f"Semicolon-separated scale sets (default '{commands.DEFAULT_SCALE_SETS}')")
    ab.add_argument("--conditions", help="Comma-separated input conditions among a, b, c")
    ab.add_argument("--donor", help="depth+normals checkpoint for condition b")
    ab.add_argument("--steps", type=int, default=200, help="Phase-1 steps per row")
    ab.add_argument("--eval-split", default="test")

    gc = sub.add_parser("gradcheck", parents=[common], help="Run the gradient-check suite")
    gc.add_argument("--case", dest="cases", action="append", help="Run only this case (repeatable)")
    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    root = logging.getLogger()
    if not root.handlers:
        logging.basicConfig(format="%(asctime)s %(name)s %(levelname)s %(message)s")
    root.setLevel(level)


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    """Config file values overridden by ``--set`` and then by dedicated flags.

    Raises:
        ConfigurationError: On an unknown key or bad value.
        FormatError: On a malformed config file line.
    """
    run = load_run_config(args.config) if args.config else RunConfig()
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--set expects KEY=VALUE, got '{item}'")
        run.set(key.strip(), value.strip(), "--set")
    for key, value in vars(args).items():
        if "." in key and value is not None:
            run.set(key, value)
    if args.seed is not None:
        for key in SEED_KEYS:
            run.set(key, args.seed)
    if getattr(args, "classes", None) is not None:
        for key in CLASS_KEYS:
            run.set(key, args.classes)
    return run


def dispatch(args: argparse.Namespace, run: RunConfig) -> int:
    if args.command == "gen-data":
        return commands.cmd_gen_data(run)
    if args.command == "train":
        return commands.cmd_train(run)
    if args.command == "eval":
        return commands.cmd_eval(
            run, args.checkpoint, args.split, args.dump_predictions, args.ground_truth_echo
        )
    if args.command == "predict":
        return commands.cmd_predict(run, args.checkpoint, args.image, args.split)
    if args.command == "ablate":
        return commands.cmd_ablate(
            run, args.scale_sets, args.conditions, args.donor, args.steps, args.eval_split
        )
    return commands.cmd_gradcheck(args.cases)


def main(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and map errors to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return dispatch(args, run_config_from_args(args))
    except TrainingError as exc:
        logger.error("Training failed: %s", exc)
        return EXIT_FAILED
    except (ConfigurationError, InputError, NotRegisteredError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
