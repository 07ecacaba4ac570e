# fatsim/federation/history.py
"""
What a run leaves behind: evaluation rows, the round plans, per-round
aggregation counts and timings, and the final global model.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from fatsim.federation.config import FederationConfig
from fatsim.federation.schedule import RoundPlan
from fatsim.model import ModelParams


@dataclass(frozen=True)
class MetricsRecord:
    round: int
    phase: str
    mode: str
    seed: int
    dice: Tuple[float, ...]
    mean_train_loss: float
    wall_ms: float = 0.0

    def row(self, record_wall_time: bool) -> List[str]:
        wall = f"{self.wall_ms:.3f}" if record_wall_time else "0"
        return [
            str(self.round),
            self.phase,
            self.mode,
            str(self.seed),
            *(f"{d:.6f}" for d in self.dice),
            f"{self.mean_train_loss:.6f}",
            wall,
        ]


def csv_header(n_classes: int) -> List[str]:
    return ["round", "phase", "mode", "seed", *(f"dice_class{c}" for c in range(n_classes)), "mean_train_loss", "wall_ms"]


@dataclass
class RunHistory:
    config: FederationConfig
    records: List[MetricsRecord] = field(default_factory=list)
    plans: List[RoundPlan] = field(default_factory=list)
    aggregated: List[int] = field(default_factory=list)  # models aggregated per round
    wall_ms: List[float] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    final_params: Optional[ModelParams] = None

    @property
    def aggregation_cost(self) -> int:
        return sum(self.aggregated)

    @property
    def n_classes(self) -> int:
        if self.final_params is not None:
            return self.final_params.desc.n_classes
        return len(self.records[0].dice) if self.records else 0

    def dice_series(self, class_id: int) -> List[float]:
        return [r.dice[class_id] for r in self.records]

    def rounds_to_target(self, class_id: int, target: float) -> Optional[int]:
        """Evaluation rows needed to first reach `target` Dice on `class_id`; None if never."""
        for i, r in enumerate(self.records):
            if r.dice[class_id] >= target:
                return i + 1
        return None

    # -------------------------
    # Output
    # -------------------------
    def write_csv(self, path: Path, record_wall_time: bool = False) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(csv_header(self.n_classes))
            for rec in self.records:
                writer.writerow(rec.row(record_wall_time))
        return path

    def summary(self) -> Dict[str, Any]:
        return {
            "mode": self.config.aggregation_mode.value,
            "seed": self.config.seed,
            "total_rounds": self.config.total_rounds,
            "alternation_period": self.config.alternation_period,
            "aggregation_cost": self.aggregation_cost,
            "aggregated_per_round": list(self.aggregated),
            "wall_ms_per_round": [round(w, 3) for w in self.wall_ms],
            "final_dice": list(self.records[-1].dice) if self.records else [],
        }

    def write_summary(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.summary(), indent=2) + "\n", encoding="utf-8")
        return path
