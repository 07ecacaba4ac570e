# fatsim/silo/dataset.py
"""
One silo's data.

Supervised silos carry `labels`. Unsupervised silos never do: whatever ground
truth the generator produced for them lives in `diagnostic_labels`, which the
unsupervised trainers never read. Baselines that assume full annotation
(FedAvgAll, Centralized) promote a silo with `as_supervised()`.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from fatsim.autodiff import Tensor
from fatsim.errors import ConfigurationError, ShapeError
from fatsim.losses import LabelMap


@dataclass(frozen=True)
class SiloDataset:
    silo_id: int
    images: Tensor
    labels: Optional[LabelMap]
    supervised: bool
    diagnostic_labels: Optional[LabelMap] = None

    def __post_init__(self):
        if len(self.images.shape) != 4:
            raise ShapeError(f"silo {self.silo_id}: images must be [N,Cin,H,W], got shape {self.images.shape}")
        n, _, h, w = self.images.shape
        if self.supervised:
            if self.labels is None:
                raise ConfigurationError(f"supervised silo {self.silo_id} has no labels")
            if self.labels.shape != (n, h, w):
                raise ShapeError(f"silo {self.silo_id}: label shape {self.labels.shape} vs images {self.images.shape}")
        elif self.labels is not None:
            raise ConfigurationError(f"unsupervised silo {self.silo_id} must not expose labels for training")
        if self.diagnostic_labels is not None and self.diagnostic_labels.shape != (n, h, w):
            raise ShapeError(
                f"silo {self.silo_id}: diagnostic label shape {self.diagnostic_labels.shape} vs images {self.images.shape}"
            )

    @property
    def n_samples(self) -> int:
        return self.images.shape[0]

    @property
    def truth(self) -> Optional[LabelMap]:
        """Labels if present, else the hidden diagnostic labels."""
        return self.labels if self.labels is not None else self.diagnostic_labels

    def batch(self, indices: Sequence[int]) -> Tensor:
        return Tensor._wrap(self.images.data[np.asarray(indices)], "batch")

    def batch_labels(self, indices: Sequence[int]) -> LabelMap:
        if self.labels is None:
            raise ConfigurationError(f"silo {self.silo_id} has no training labels")
        return self.labels.take(np.asarray(indices))

    def as_supervised(self) -> "SiloDataset":
        if self.supervised:
            return self
        if self.diagnostic_labels is None:
            raise ConfigurationError(f"silo {self.silo_id} has no labels, hidden or otherwise")
        return SiloDataset(self.silo_id, self.images, self.diagnostic_labels, True, self.diagnostic_labels)

    def as_unsupervised(self) -> "SiloDataset":
        if not self.supervised:
            return self
        return SiloDataset(self.silo_id, self.images, None, False, self.labels)


def pool_silos(silos: List[SiloDataset], supervised: bool) -> SiloDataset:
    """
    Concatenate silos (in silo id order) into one node's dataset. The pooled
    silo takes the smallest member id, so pooling a single silo is a no-op.
    """
    if not silos:
        raise ConfigurationError("cannot pool an empty silo list")
    ordered = sorted(silos, key=lambda s: s.silo_id)
    if len(ordered) == 1:
        only = ordered[0]
        return only.as_supervised() if supervised else only.as_unsupervised()
    images = Tensor._wrap(np.concatenate([s.images.data for s in ordered]), "pool")
    truths = [s.truth for s in ordered]
    truth = None
    if all(t is not None for t in truths):
        truth = LabelMap(np.concatenate([t.values for t in truths]), truths[0].n_classes)
    if supervised:
        if truth is None:
            raise ConfigurationError("supervised pooling needs labels on every silo")
        return SiloDataset(ordered[0].silo_id, images, truth, True, truth)
    return SiloDataset(ordered[0].silo_id, images, None, False, truth)
