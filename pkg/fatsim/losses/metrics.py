# fatsim/losses/metrics.py
from typing import List

import numpy as np

from fatsim.errors import ShapeError
from fatsim.losses.losses import LabelMap


def dice_score(pred: LabelMap, truth: LabelMap, class_id: int) -> float:
    """
    2|A n B| / (|A| + |B|) for the pixel sets of `class_id`.
    Both sets empty counts as a perfect score (1.0).
    """
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match truth shape {truth.shape}")
    n_classes = max(pred.n_classes, truth.n_classes)
    if not 0 <= class_id < n_classes:
        raise ValueError(f"class_id {class_id} out of range for {n_classes} classes")
    a = pred.values == class_id
    b = truth.values == class_id
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def per_class_dice(pred: LabelMap, truth: LabelMap) -> List[float]:
    return [dice_score(pred, truth, c) for c in range(truth.n_classes)]
