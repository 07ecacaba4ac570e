# fatsim/silo/config.py
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LocalTrainConfig(BaseModel):
    """Hyperparameters of one silo's local training."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(2, ge=1)
    batch_size: int = Field(2, ge=1)
    lr_theta: float = Field(0.05, gt=0)
    lr_xi: float = Field(0.05, gt=0)
    # a handful of local steps per round; a slower target would barely move
    ema_decay: float = Field(0.8, gt=0, lt=1)
    # fixed mixup coefficient; unset -> U(mixup_low, mixup_high) per step
    mixup_lambda: Optional[float] = Field(None, gt=0, lt=1)
    mixup_low: float = Field(0.3, gt=0, lt=1)
    mixup_high: float = Field(0.7, gt=0, lt=1)
    seed: int = Field(0, ge=0)
    dice_include_background: bool = True
    sota_threshold: float = Field(0.9, ge=0, le=1)
    intensity_level: float = Field(0.9, ge=0)

    @model_validator(mode="after")
    def _check_mixup_range(self):
        if self.mixup_low >= self.mixup_high:
            raise ValueError(f"mixup_low ({self.mixup_low}) must be below mixup_high ({self.mixup_high})")
        return self
