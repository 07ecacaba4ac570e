# fatsim/losses/losses.py
"""
Soft Dice and cross-entropy losses on probability maps.

Both losses take softmax probabilities (not logits) because the training
objective applies them to the same p = softmax(f(x)). Both accept an optional
pixel mask used by the threshold self-training baseline; a fully masked batch
yields a zero loss and a zero gradient.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from fatsim.autodiff import GradTape, Tensor, add
from fatsim.errors import ProbabilityError, ShapeError

DICE_SMOOTH = 1e-5
CE_CLAMP = 1e-7
PROB_TOLERANCE = 1e-3


@dataclass(frozen=True)
class LabelMap:
    """Integer class indices [B, H, W], every value in [0, n_classes)."""

    values: np.ndarray
    n_classes: int

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ShapeError(f"LabelMap must be [B,H,W], got shape {values.shape}")
        if not np.issubdtype(values.dtype, np.integer):
            raise ShapeError(f"LabelMap values must be integers, got dtype {values.dtype}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        if values.size and (values.min() < 0 or values.max() >= self.n_classes):
            raise ValueError(f"LabelMap values must lie in [0, {self.n_classes}), got [{values.min()}, {values.max()}]")
        values = values.astype(np.int64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    def one_hot(self) -> np.ndarray:
        """[B, C, H, W] float64 one-hot encoding."""
        return np.eye(self.n_classes, dtype=np.float64)[self.values].transpose(0, 3, 1, 2)

    def take(self, index) -> "LabelMap":
        return LabelMap(self.values[index], self.n_classes)


@dataclass(frozen=True)
class LossValue:
    value: Tensor
    n_pixels: int
    n_active: int

    @property
    def scalar(self) -> float:
        return self.value.item()


def _check_pair(probs: Tensor, y: LabelMap, mask: Optional[np.ndarray]) -> np.ndarray:
    if len(probs.shape) != 4:
        raise ShapeError(f"probabilities must be [B,C,H,W], got shape {probs.shape}")
    b, c, h, w = probs.shape
    if y.shape != (b, h, w):
        raise ShapeError(f"label shape {y.shape} does not match probability shape {probs.shape}")
    if y.n_classes != c:
        raise ShapeError(f"label map has {y.n_classes} classes, probability shape is {probs.shape}")
    if mask is None:
        return np.ones((b, 1, h, w), dtype=np.float64)
    mask = np.asarray(mask)
    if mask.shape != (b, h, w):
        raise ShapeError(f"mask shape {mask.shape} does not match label shape {y.shape}")
    return mask.astype(np.float64)[:, None]


def check_probabilities(probs: Tensor) -> None:
    p = probs.data
    if p.min() < -PROB_TOLERANCE or p.max() > 1 + PROB_TOLERANCE:
        raise ProbabilityError(f"probabilities outside [0,1]: [{p.min()}, {p.max()}]")
    sums = p.sum(axis=1, dtype=np.float64)
    worst = float(np.abs(sums - 1.0).max()) if sums.size else 0.0
    if worst > PROB_TOLERANCE:
        raise ProbabilityError(f"channel sums deviate from 1 by {worst:.3g}")


def soft_dice_loss(
    probs: Tensor,
    y: LabelMap,
    tape: Optional[GradTape] = None,
    mask: Optional[np.ndarray] = None,
    include_background: bool = True,
) -> LossValue:
    """
    DL = 1 - mean_c (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps), sums over batch
    and pixels, eps = 1e-5. With include_background=False class 0 is left out of the mean.
    """
    m = _check_pair(probs, y, mask)
    check_probabilities(probs)
    c = probs.shape[1]
    classes = np.arange(c) if include_background else np.arange(1, c)
    if classes.size == 0:
        raise ValueError("soft_dice_loss needs at least one scored class")

    p = probs.data.astype(np.float64)
    onehot = y.one_hot()
    inter = (p * onehot * m).sum(axis=(0, 2, 3))
    denom = (p * m).sum(axis=(0, 2, 3)) + (onehot * m).sum(axis=(0, 2, 3)) + DICE_SMOOTH
    terms = (2.0 * inter + DICE_SMOOTH) / denom
    loss = 1.0 - terms[classes].mean()

    value = Tensor._wrap(np.array([loss]), "soft_dice_loss")
    if tape is not None:
        weight = np.zeros(c)
        weight[classes] = 1.0 / classes.size

        def backward(g: np.ndarray):
            num = 2.0 * onehot * denom[None, :, None, None] - (2.0 * inter + DICE_SMOOTH)[None, :, None, None]
            d = -(weight / denom**2)[None, :, None, None] * num * m
            return (g.reshape(-1)[0] * d,)

        tape.record("soft_dice_loss", (probs,), value, backward)
    return LossValue(value, int(m.size), int(m.sum()))


def cross_entropy(
    probs: Tensor,
    y: LabelMap,
    tape: Optional[GradTape] = None,
    mask: Optional[np.ndarray] = None,
) -> LossValue:
    """Mean over (unmasked) pixels of -log(clamp(p_y, 1e-7, 1))."""
    m = _check_pair(probs, y, mask)[:, 0]
    p = probs.data.astype(np.float64)
    p_true = np.take_along_axis(p, y.values[:, None], axis=1)[:, 0]
    clamped = np.clip(p_true, CE_CLAMP, 1.0)
    n_active = float(m.sum())
    loss = float((-np.log(clamped) * m).sum() / n_active) if n_active > 0 else 0.0

    value = Tensor._wrap(np.array([loss]), "cross_entropy")
    if tape is not None and n_active > 0:

        def backward(g: np.ndarray):
            d = np.zeros_like(p)
            inside = p_true >= CE_CLAMP
            per_pixel = np.where(inside, -1.0 / np.where(inside, p_true, 1.0), 0.0) * m / n_active
            np.put_along_axis(d, y.values[:, None], per_pixel[:, None], axis=1)
            return (g.reshape(-1)[0] * d,)

        tape.record("cross_entropy", (probs,), value, backward)
    return LossValue(value, int(m.size), int(n_active))


def dice_ce_loss(
    probs: Tensor,
    y: LabelMap,
    tape: Optional[GradTape] = None,
    mask: Optional[np.ndarray] = None,
    include_background: bool = True,
) -> LossValue:
    """L_tr = DL(p, y) + CE(p, y)."""
    dl = soft_dice_loss(probs, y, tape, mask=mask, include_background=include_background)
    ce = cross_entropy(probs, y, tape, mask=mask)
    return LossValue(add(dl.value, ce.value, tape), dl.n_pixels, dl.n_active)
