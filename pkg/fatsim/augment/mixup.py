# fatsim/augment/mixup.py
"""
Mixup of inputs and probability maps, argmax pseudo-labels, and the random
intensity shift used by the threshold self-training baseline.

Nothing here touches a global RNG: callers pass the generator for their silo.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from fatsim.autodiff import Tensor
from fatsim.errors import ShapeError
from fatsim.losses import LabelMap


@dataclass(frozen=True)
class MixupPair:
    lam: float
    batch_a: Tensor
    batch_b: Tensor

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"mixup lambda must lie in (0, 1), got {self.lam}")
        if self.batch_a.shape != self.batch_b.shape:
            raise ShapeError(f"mixup batches differ: {self.batch_a.shape} vs {self.batch_b.shape}")

    def mixed(self) -> Tensor:
        return mixup(self.batch_a, self.batch_b, self.lam)


def mixup(a: Tensor, b: Tensor, lam: float) -> Tensor:
    """lam * a + (1 - lam) * b, evaluated in 64-bit."""
    if a.shape != b.shape:
        raise ShapeError(f"mixup shape mismatch: {a.shape} vs {b.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup lambda must lie in [0, 1], got {lam}")
    out = lam * a.data.astype(np.float64) + (1.0 - lam) * b.data.astype(np.float64)
    return Tensor._wrap(out, "mixup")


def sample_lambda(gen: np.random.Generator, fixed: Optional[float], low: float, high: float) -> float:
    if fixed is not None:
        return float(fixed)
    return float(gen.uniform(low, high))


def pseudo_label(p_mixed: Tensor) -> LabelMap:
    """Per-pixel argmax over channels; ties go to the lowest class index."""
    if len(p_mixed.shape) != 4:
        raise ShapeError(f"pseudo_label expects [B,C,H,W], got shape {p_mixed.shape}")
    return LabelMap(np.argmax(p_mixed.data, axis=1), p_mixed.shape[1])


def intensity_shift(x: Tensor, level: float, gen: np.random.Generator) -> Tensor:
    """
    x + r * level * std(x_sample), with one r ~ U(-1, 1) per sample and the std
    taken over every pixel (and channel) of that sample.
    """
    if level < 0:
        raise ValueError(f"intensity shift level must be >= 0, got {level}")
    data = x.data.astype(np.float64)
    n = data.shape[0]
    r = gen.uniform(-1.0, 1.0, size=n)
    std = data.reshape(n, -1).std(axis=1)
    shift = (r * level * std).reshape((n,) + (1,) * (data.ndim - 1))
    return Tensor._wrap(data + shift, "intensity_shift")
