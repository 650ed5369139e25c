# relibev/cli.py
import argparse
import logging
import os
import sys
from typing import List, Optional

from domain.errors import ArgumentError, RelibevError
from relibev import pipeline
from utils.config import load_config
from utils.logging_utils import setup_logging

EXIT_OK = 0
EXIT_RUNTIME = 2

COMMANDS = ("synth", "train", "sweep", "eval", "selftest")


class _Parser(argparse.ArgumentParser):
    """Usage errors surface as ArgumentError (exit 1) instead of SystemExit(2)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ArgumentError(f"{self.prog}: {message}")


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Experiment config (YAML).")
    common.add_argument(
        "--out", default=None, help="Output directory (defaults to output_dir in the config)."
    )
    common.add_argument("--seed", type=int, default=None, help="Root seed override.")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Config override, e.g. --set stfa.d=32 (repeatable).",
    )
    common.add_argument(
        "--log-level",
        dest="log_level",
        default=None,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level (default INFO).",
    )
    common.add_argument(
        "--log-file", dest="log_file", default=None, help="Path to log file (default relibev.log)."
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = _Parser(
        prog="relibev",
        description="Reliability-weighted LiDAR-camera BEV fusion on synthetic desk-scale scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("synth", parents=[common], help="Synthesize the train and test splits.")

    train = sub.add_parser("train", parents=[common], help="Run the training stages.")
    train.add_argument(
        "--stage",
        dest="stages",
        type=int,
        action="append",
        choices=[1, 2, 3],
        help="Stage to run (repeatable; default all three in order).",
    )

    sweep = sub.add_parser("sweep", parents=[common], help="Robustness or ablation sweep.")
    sweep.add_argument("--checkpoint", default=None, help="Checkpoint to evaluate.")
    sweep.add_argument(
        "--scenarios", default=None, help="Scenario table: a YAML path or 'standard'."
    )
    sweep.add_argument(
        "--ablation",
        default=None,
        help="Ablation preset (components, stfa, fusion); retrains every variant.",
    )

    evaluate = sub.add_parser("eval", parents=[common], help="Evaluate on the clean test split.")
    evaluate.add_argument("--checkpoint", default=None, help="Checkpoint to evaluate.")

    sub.add_parser("selftest", parents=[common], help="Gradient checks and closed-form corners.")
    return parser


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "selftest":
        pipeline.cmd_selftest(args.out)
        return
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    cfg = load_config(args.config, overrides)
    if args.command == "synth":
        pipeline.cmd_synth(cfg, args.out)
    elif args.command == "train":
        pipeline.cmd_train(cfg, args.out, args.stages)
    elif args.command == "eval":
        pipeline.cmd_eval(cfg, args.checkpoint, args.out)
    elif args.command == "sweep":
        pipeline.cmd_sweep(cfg, args.checkpoint, args.scenarios, args.out, args.ablation)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    # Set env vars for the underlying code to read
    if args.log_level:
        os.environ["LOG_LEVEL"] = args.log_level
    if args.log_file:
        os.environ["LOG_FILE"] = args.log_file

    setup_logging()
    logger = logging.getLogger(__name__)
    logger.info(f"Starting relibev {args.command}")

    try:
        _dispatch(args)
    except RelibevError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception:
        logger.exception(f"relibev {args.command} failed")
        return EXIT_RUNTIME
    logger.info(f"relibev {args.command} finished")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
