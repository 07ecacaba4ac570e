from fatsim.losses.losses import (
    CE_CLAMP,
    DICE_SMOOTH,
    LabelMap,
    LossValue,
    check_probabilities,
    cross_entropy,
    dice_ce_loss,
    soft_dice_loss,
)
from fatsim.losses.metrics import dice_score, per_class_dice

__all__ = [
    "CE_CLAMP",
    "DICE_SMOOTH",
    "LabelMap",
    "LossValue",
    "check_probabilities",
    "cross_entropy",
    "dice_ce_loss",
    "dice_score",
    "per_class_dice",
    "soft_dice_loss",
]
