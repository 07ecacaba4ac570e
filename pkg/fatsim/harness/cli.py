# fatsim/harness/cli.py
"""
Command-line entry point.

    fatsim pretrain    --config <file> --out <ckpt>
    fatsim run         --config <file> --out-dir <dir> [--jobs N]
    fatsim evaluate    --ckpt <file> --config <file> [--data <file>] [--out <csv>]
    fatsim compare     --config <file> --out-dir <dir> --modes FAT,SupervisedOnly --seeds 0,1,2
    fatsim export-data --config <file> --out-dir <dir>

Exit codes: 0 ok, 1 invariant violation, 2 configuration or usage error,
3 checkpoint, data file or output I/O error.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from fatsim.errors import CheckpointError, ConfigurationError, FatSimError, InvariantViolation
from fatsim.federation import AggregationMode
from fatsim.harness.checkpoint import save_checkpoint
from fatsim.harness.config import ExperimentConfig, load_config
from fatsim.harness.runner import compare_modes, evaluate_model, export_data, pretrain_model, run_experiment, write_dice_report

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_DATA = 3


def configure_logging(level: Optional[str]) -> str:
    load_dotenv()
    level = (level or os.getenv("FATSIM_LOG_LEVEL") or "INFO").upper()
    logger.remove()
    logger.add(sys.stderr, level=level, format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {message}")
    return level


def _show_progress(args: argparse.Namespace, level: str) -> bool:
    return not args.quiet and logger.level(level).no <= logger.level("INFO").no


def _parse_modes(text: str) -> List[AggregationMode]:
    try:
        return [AggregationMode(m.strip()) for m in text.split(",") if m.strip()]
    except ValueError as e:
        raise ConfigurationError(f"invalid mode list {text!r}: {e}") from e


def _parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise ConfigurationError(f"invalid seed list {text!r}") from e
    if not seeds or any(s < 0 for s in seeds):
        raise ConfigurationError(f"seeds must be non-negative integers, got {text!r}")
    return seeds


# -------------------------
# Commands
# -------------------------
def cmd_pretrain(args: argparse.Namespace, cfg: ExperimentConfig, progress: bool) -> int:
    params, provenance = pretrain_model(cfg)
    save_checkpoint(Path(args.out), params, provenance)
    print(f"pretrained checkpoint -> {args.out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, cfg: ExperimentConfig, progress: bool) -> int:
    out_dir = Path(args.out_dir or cfg.experiment.out_dir)
    result = run_experiment(cfg, out_dir, jobs=args.jobs, progress=progress)
    last = result.history.records[-1]
    print(f"{cfg.experiment.mode.value} seed={cfg.seed}: final dice {[round(d, 4) for d in last.dice]}")
    print(f"metrics -> {result.metrics_path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: ExperimentConfig, progress: bool) -> int:
    dice = evaluate_model(cfg, Path(args.ckpt), Path(args.data) if args.data else None)
    out = Path(args.out) if args.out else Path(args.ckpt).with_suffix(".dice.csv")
    write_dice_report(out, dice)
    for c, d in enumerate(dice):
        print(f"class {c}: dice {d:.4f}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, cfg: ExperimentConfig, progress: bool) -> int:
    modes = _parse_modes(args.modes)
    seeds = _parse_seeds(args.seeds)
    compare_modes(cfg, modes, seeds, Path(args.out_dir), jobs=args.jobs, progress=progress)
    print(f"comparison -> {Path(args.out_dir) / 'comparison.csv'}")
    return EXIT_OK


def cmd_export_data(args: argparse.Namespace, cfg: ExperimentConfig, progress: bool) -> int:
    train, test = export_data(cfg, Path(args.out_dir))
    print(f"train silos -> {train}\ntest set -> {test}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fatsim", description="Federated alternate training simulator")
    ap.add_argument("--log-level", default=None, help="loguru level (default: $FATSIM_LOG_LEVEL or INFO)")
    ap.add_argument("--quiet", action="store_true", help="no progress bars")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="train the warm-start model on the source task")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("run", help="run one federated experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--jobs", type=int, default=None, help="max concurrent silo jobs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="per-class Dice of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--data", default=None, help="exported test set (default: regenerate from config)")
    p.add_argument("--out", default=None, help="report CSV (default: <ckpt>.dice.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="run several modes and seeds, write comparison.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--modes", default="FAT,SupervisedOnly,WeightedRamp")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--jobs", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export-data", help="write training silos and test set as binary files")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export_data)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        level = configure_logging(args.log_level)
    except ValueError as e:
        print(f"invalid log level: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "jobs", None) is not None and args.jobs < 1:
        logger.error("--jobs must be >= 1, got {}", args.jobs)
        return EXIT_CONFIG

    try:
        cfg = load_config(Path(args.config))
        return args.func(args, cfg, _show_progress(args, level))
    except InvariantViolation as e:
        logger.error("{}", e)
        return EXIT_INVARIANT
    except CheckpointError as e:
        logger.error("{}", e)
        return EXIT_DATA
    except (ConfigurationError, ValidationError) as e:
        logger.error("configuration error: {}", e)
        return EXIT_CONFIG
    except FatSimError as e:
        # shape or descriptor problems surfacing from user-supplied files
        logger.error("{}", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("I/O error: {}", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
