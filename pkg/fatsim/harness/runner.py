# fatsim/harness/runner.py
"""
Experiment orchestration behind the CLI commands.

    pretrain_model     central training on the rectangle source task
    run_experiment     one (mode, seed) run -> metrics.csv, final.ckpt, summary.json
    compare_modes      every (mode, seed) pair -> comparison.csv
    evaluate_model     per-class Dice of a checkpoint on a test set
"""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from fatsim.data import generate_pretrain_source, generate_silos, generate_test_set
from fatsim.errors import CheckpointError
from fatsim.federation import AggregationMode, RunHistory, evaluate, run_federation
from fatsim.harness.checkpoint import load_checkpoint, save_checkpoint
from fatsim.harness.config import ExperimentConfig, write_config
from fatsim.harness.dataset_io import export_silos, import_silos
from fatsim.harness.invariants import check_history
from fatsim.model import ModelParams, init_model
from fatsim.silo import LocalTrainConfig, SiloDataset, fit_supervised

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"
FINAL_CHECKPOINT = "final.ckpt"
CONFIG_ECHO = "config.env"
COMPARISON_FILE = "comparison.csv"


@dataclass(frozen=True)
class RunResult:
    history: RunHistory
    metrics_path: Path
    checkpoint_path: Path
    summary_path: Path
    verdict: Dict[str, Any]


# ----------------------------------------------------------
# Building blocks
# ----------------------------------------------------------
def build_data(cfg: ExperimentConfig) -> Tuple[List[SiloDataset], SiloDataset]:
    spec = cfg.dataset_spec()
    return generate_silos(spec), generate_test_set(spec)


def pretrain_model(cfg: ExperimentConfig) -> Tuple[ModelParams, str]:
    spec = cfg.dataset_spec()
    source = generate_pretrain_source(spec)
    local = LocalTrainConfig(
        epochs=cfg.pretrain.epochs,
        batch_size=cfg.pretrain.batch_size,
        lr_theta=cfg.pretrain.lr,
        seed=cfg.seed,
        dice_include_background=cfg.local.dice_include_background,
    )
    update = fit_supervised(source, init_model(cfg.model, cfg.seed), local)
    provenance = (
        f"source=synthetic-rectangles samples={source.n_samples} "
        f"epochs={cfg.pretrain.epochs} steps={update.n_steps} seed={cfg.seed}"
    )
    logger.info("pretrained on source task: {} (final mean loss {:.4f})", provenance, update.mean_loss)
    return update.params, provenance


def initial_model(cfg: ExperimentConfig) -> ModelParams:
    """theta_0: the pretrained checkpoint when configured, else a seeded init."""
    if cfg.experiment.pretrain_checkpoint:
        ckpt = load_checkpoint(Path(cfg.experiment.pretrain_checkpoint), expected=cfg.model)
        logger.info("warm start from {} ({})", cfg.experiment.pretrain_checkpoint, ckpt.provenance)
        return ckpt.params
    return init_model(cfg.model, cfg.seed)


# ----------------------------------------------------------
# Commands
# ----------------------------------------------------------
def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Path,
    jobs: Optional[int] = None,
    progress: bool = False,
) -> RunResult:
    out_dir = Path(out_dir)
    fed = cfg.federation_config(jobs)
    silos, test_set = build_data(cfg)
    theta0 = initial_model(cfg)

    history = run_federation(fed, silos, theta0, test_set, progress=progress)

    # 1) outputs first, so a failing run can still be inspected
    metrics = history.write_csv(out_dir / METRICS_FILE, cfg.experiment.record_wall_time)
    summary = history.write_summary(out_dir / SUMMARY_FILE)
    ckpt = save_checkpoint(
        out_dir / FINAL_CHECKPOINT,
        history.final_params,
        f"mode={fed.aggregation_mode.value} rounds={fed.total_rounds} seed={cfg.seed}",
    )
    write_config(out_dir / CONFIG_ECHO, cfg)

    # 2) invariants
    verdict = check_history(history, cfg.model)
    logger.info("run complete: {} rows -> {}", len(history.records), metrics)
    return RunResult(history, metrics, ckpt, summary, verdict)


def comparison_row(history: RunHistory, target: float) -> List[str]:
    last = history.records[-1]
    tumor = history.n_classes - 1
    reached = history.rounds_to_target(tumor, target)
    return [
        last.mode,
        str(last.seed),
        *(f"{d:.6f}" for d in last.dice),
        f"{max(history.dice_series(tumor)):.6f}",
        "" if reached is None else str(reached),
        str(history.aggregation_cost),
    ]


def compare_modes(
    cfg: ExperimentConfig,
    modes: Sequence[AggregationMode],
    seeds: Sequence[int],
    out_dir: Path,
    jobs: Optional[int] = None,
    progress: bool = False,
) -> Dict[str, List[RunHistory]]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs: Dict[str, List[RunHistory]] = {}
    rows = []
    for mode in modes:
        for seed in seeds:
            run_cfg = cfg.with_run(mode=mode, seed=seed)
            result = run_experiment(run_cfg, out_dir / f"{AggregationMode(mode).value}-seed{seed}", jobs, progress)
            runs.setdefault(AggregationMode(mode).value, []).append(result.history)
            rows.append(comparison_row(result.history, cfg.experiment.target_dice))

    n_classes = cfg.model.n_classes
    path = out_dir / COMPARISON_FILE
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["mode", "seed", *(f"dice_class{c}" for c in range(n_classes)), "best_tumor_dice", "rounds_to_target", "aggregation_cost"]
        )
        writer.writerows(rows)

    for mode, histories in runs.items():
        tumor = float(np.mean([h.records[-1].dice[n_classes - 1] for h in histories]))
        logger.info("{}: mean final tumor dice {:.4f} over {} seeds", mode, tumor, len(histories))
    return runs


def evaluate_model(
    cfg: ExperimentConfig, checkpoint: Path, data: Optional[Path] = None
) -> List[float]:
    params = load_checkpoint(checkpoint, expected=cfg.model).params
    if data is not None:
        silos = import_silos(data)
        if len(silos) != 1:
            raise CheckpointError(f"{data} holds {len(silos)} silos; evaluation needs exactly one test set")
        test_set = silos[0]
    else:
        test_set = generate_test_set(cfg.dataset_spec())
    return evaluate(params, test_set)


def write_dice_report(path: Path, dice: Sequence[float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "dice"])
        for c, d in enumerate(dice):
            writer.writerow([c, f"{d:.6f}"])
    return path


def export_data(cfg: ExperimentConfig, out_dir: Path) -> Tuple[Path, Path]:
    silos, test_set = build_data(cfg)
    n_classes = cfg.model.n_classes
    train = export_silos(Path(out_dir) / "train.fatdata", silos, n_classes)
    test = export_silos(Path(out_dir) / "test.fatdata", [test_set], n_classes)
    return train, test
