# fatsim/harness/config.py
"""
Experiment configuration and its file format.

One experiment per file: flat `section.field=value` lines, parsed with
python-dotenv. Lists are comma separated, an empty value means unset.
Dumping is canonical (fixed section order, fields in declaration order), so
load -> dump is byte stable for a canonical file.

    # [experiment]
    experiment.mode=FAT
    experiment.seed=0
    ...
    # [federation]
    federation.total_rounds=60
"""

import typing
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from fatsim.data import DatasetSpec
from fatsim.errors import ConfigurationError
from fatsim.federation import AggregationMode, FederationConfig
from fatsim.model import ArchDescriptor
from fatsim.silo import LocalTrainConfig


class ExperimentSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    mode: AggregationMode = AggregationMode.FAT
    seed: int = Field(0, ge=0)
    out_dir: str = "runs"
    pretrain_checkpoint: Optional[str] = None
    record_wall_time: bool = False
    # Dice on the last class that counts as "reached" in comparisons
    target_dice: float = Field(0.5, ge=0, le=1)
    jobs: int = Field(1, ge=1)


class RoundsSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    total_rounds: int = Field(60, ge=1)
    alternation_period: int = Field(5, ge=1)
    eval_every: int = Field(5, ge=1)
    warmup_rounds: Optional[int] = Field(None, ge=0)


class PretrainConfig(BaseModel):
    """Central training on the rectangle source task."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(40, ge=1)
    batch_size: int = Field(4, ge=1)
    lr: float = Field(0.05, gt=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    experiment: ExperimentSection = Field(default_factory=ExperimentSection)
    model: ArchDescriptor = Field(default_factory=ArchDescriptor)
    federation: RoundsSection = Field(default_factory=RoundsSection)
    local: LocalTrainConfig = Field(default_factory=LocalTrainConfig)
    data: DatasetSpec = Field(default_factory=DatasetSpec)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.model.n_classes != self.data.n_classes:
            raise ValueError(f"model.n_classes={self.model.n_classes} but data.n_classes={self.data.n_classes}")
        if self.model.in_channels != 1:
            raise ValueError("the synthetic data has one input channel; model.in_channels must be 1")
        smallest = min(self.data.samples_per_silo)
        if smallest < 2 * self.local.batch_size:
            raise ValueError(f"every silo needs >= 2 * batch_size = {2 * self.local.batch_size} samples, smallest has {smallest}")
        return self

    # -------------------------
    # Derived configs
    # -------------------------
    @property
    def seed(self) -> int:
        return self.experiment.seed

    def local_config(self) -> LocalTrainConfig:
        return self.local.model_copy(update={"seed": self.seed})

    def dataset_spec(self) -> DatasetSpec:
        return self.data.model_copy(update={"seed": self.seed})

    def federation_config(self, jobs: Optional[int] = None) -> FederationConfig:
        f = self.federation
        return FederationConfig(
            total_rounds=f.total_rounds,
            alternation_period=f.alternation_period,
            eval_every=f.eval_every,
            warmup_rounds=f.warmup_rounds,
            aggregation_mode=self.experiment.mode,
            n_silos=self.data.n_silos,
            supervised_ids=list(self.data.supervised_ids),
            local=self.local_config(),
            jobs=self.experiment.jobs if jobs is None else jobs,
        )

    def with_run(self, mode: Optional[AggregationMode] = None, seed: Optional[int] = None) -> "ExperimentConfig":
        update: Dict[str, Any] = {}
        if mode is not None:
            update["mode"] = AggregationMode(mode)
        if seed is not None:
            update["seed"] = int(seed)
        return self.model_copy(update={"experiment": self.experiment.model_copy(update=update)})


# ----------------------------------------------------------
# File format
# ----------------------------------------------------------
SECTIONS: Tuple[Tuple[str, Type[BaseModel]], ...] = (
    ("experiment", ExperimentSection),
    ("model", ArchDescriptor),
    ("federation", RoundsSection),
    ("local", LocalTrainConfig),
    ("data", DatasetSpec),
    ("pretrain", PretrainConfig),
)

# seeds of these sections always follow experiment.seed
DERIVED_KEYS = {"local.seed", "data.seed"}


def _is_list(annotation) -> bool:
    return typing.get_origin(annotation) in (list, List)


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format(v) for v in value)
    return str(value)


def _parse(raw: Optional[str], annotation) -> Any:
    if raw is None or raw.strip() == "":
        return [] if _is_list(annotation) else None
    raw = raw.strip()
    if _is_list(annotation):
        return [item.strip() for item in raw.split(",")]
    return raw


def parse_config_text(values: Dict[str, Optional[str]]) -> ExperimentConfig:
    sections: Dict[str, Dict[str, Any]] = {name: {} for name, _ in SECTIONS}
    models = dict(SECTIONS)
    for key, raw in values.items():
        if key in DERIVED_KEYS:
            raise ConfigurationError(f"{key} follows experiment.seed and cannot be set on its own")
        section, _, field = key.partition(".")
        if section not in models or not field:
            raise ConfigurationError(f"unknown config key {key!r}")
        fields = models[section].model_fields
        if field not in fields:
            raise ConfigurationError(f"unknown config key {key!r}")
        parsed = _parse(raw, fields[field].annotation)
        # unset optional value: leave it to the default
        if parsed is None:
            continue
        sections[section][field] = parsed
    try:
        return ExperimentConfig(**sections)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {e}") from e


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(dotenv_values(path, interpolate=False))


def dump_config(cfg: ExperimentConfig) -> str:
    lines: List[str] = []
    for name, model_cls in SECTIONS:
        section = getattr(cfg, name)
        lines.append(f"# [{name}]")
        for field in model_cls.model_fields:
            if f"{name}.{field}" in DERIVED_KEYS:
                continue
            lines.append(f"{name}.{field}={_format(getattr(section, field))}")
    return "\n".join(lines) + "\n"


def write_config(path: Path, cfg: ExperimentConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path
