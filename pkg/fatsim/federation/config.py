# fatsim/federation/config.py
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from fatsim.silo import LocalTrainConfig


class AggregationMode(str, Enum):
    FAT = "FAT"
    FEDAVG_ALL = "FedAvgAll"
    SUPERVISED_ONLY = "SupervisedOnly"
    WEIGHTED_RAMP = "WeightedRamp"
    THRESHOLD_SOTA = "ThresholdSOTA"
    CENTRALIZED = "Centralized"
    SEMI_CENTRALIZED = "SemiCentralized"


BASELINE_MODES = (
    AggregationMode.FEDAVG_ALL,
    AggregationMode.SUPERVISED_ONLY,
    AggregationMode.THRESHOLD_SOTA,
    AggregationMode.CENTRALIZED,
    AggregationMode.SEMI_CENTRALIZED,
)


class FederationConfig(BaseModel):
    """
    Server-side settings of one run. The silo layout (K silos, supervised ids)
    is part of the config so the server can reject a data set that does not
    match it before any training happens.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    total_rounds: int = Field(60, ge=1)
    alternation_period: int = Field(5, ge=1)
    eval_every: int = Field(5, ge=1)
    aggregation_mode: AggregationMode = AggregationMode.FAT
    # ThresholdSOTA supervised-only warm-up; unset -> total_rounds // 6
    warmup_rounds: Optional[int] = Field(None, ge=0)
    n_silos: int = Field(6, ge=1)
    supervised_ids: List[int] = Field(default_factory=lambda: [0, 1])
    local: LocalTrainConfig = Field(default_factory=LocalTrainConfig)
    jobs: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_layout(self):
        if not self.supervised_ids:
            raise ValueError("at least one supervised silo is required")
        if len(set(self.supervised_ids)) != len(self.supervised_ids):
            raise ValueError(f"duplicate supervised ids: {self.supervised_ids}")
        if any(not 0 <= s < self.n_silos for s in self.supervised_ids):
            raise ValueError(f"supervised ids {self.supervised_ids} out of range for {self.n_silos} silos")
        return self

    @property
    def seed(self) -> int:
        return self.local.seed

    @property
    def effective_warmup(self) -> int:
        return self.total_rounds // 6 if self.warmup_rounds is None else self.warmup_rounds

    def is_eval_round(self, t: int) -> bool:
        return (t + 1) % self.eval_every == 0 or t == self.total_rounds - 1
