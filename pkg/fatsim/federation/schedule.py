# fatsim/federation/schedule.py
"""
Round schedule: which phase a round belongs to, who participates, and with
what aggregation weight.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Tuple

from fatsim.errors import ConfigurationError

WEIGHT_TOLERANCE = 1e-9


class Phase(str, Enum):
    SUPERVISED = "Supervised"
    UNSUPERVISED = "Unsupervised"
    # baselines that train both kinds of silo in the same round
    MIXED = "Mixed"


def phase_of(t: int, A: int) -> Phase:
    """Supervised iff (t mod 2A) < A."""
    if t < 0:
        raise ValueError(f"round index must be >= 0, got {t}")
    if A < 1:
        raise ValueError(f"alternation period must be >= 1, got {A}")
    return Phase.SUPERVISED if t % (2 * A) < A else Phase.UNSUPERVISED


def gaussian_rampup(t: int, T_total: int) -> float:
    """eta = exp(-5 (1 - T)^2) with T = t / (T_total - 1) going 0 -> 1."""
    if T_total < 2:
        raise ValueError(f"ramp-up needs at least 2 rounds, got {T_total}")
    if not 0 <= t < T_total:
        raise ValueError(f"round {t} outside [0, {T_total})")
    x = t / (T_total - 1)
    return math.exp(-5.0 * (1.0 - x) ** 2)


def normalized_weights(raw: Sequence[float]) -> Tuple[float, ...]:
    if not raw:
        raise ConfigurationError("cannot normalize an empty weight list")
    if any(w <= 0 for w in raw):
        raise ConfigurationError(f"aggregation weights must be positive, got {list(raw)}")
    total = math.fsum(raw)
    return tuple(w / total for w in raw)


def ramp_weights(counts: Sequence[int], supervised: Sequence[bool], eta: float) -> Tuple[float, ...]:
    """N_k for supervised silos, eta * N_k for unsupervised ones, renormalized."""
    if len(counts) != len(supervised):
        raise ConfigurationError(f"{len(counts)} counts for {len(supervised)} silos")
    return normalized_weights([n if sup else eta * n for n, sup in zip(counts, supervised)])


@dataclass(frozen=True)
class RoundPlan:
    round: int
    phase: Phase
    participants: Tuple[int, ...]
    weights: Tuple[float, ...]

    def __post_init__(self):
        if len(self.participants) != len(self.weights):
            raise ConfigurationError(
                f"round {self.round}: {len(self.participants)} participants but {len(self.weights)} weights"
            )
        if not self.participants:
            raise ConfigurationError(f"round {self.round} has no participants")
        if any(w <= 0 for w in self.weights):
            raise ConfigurationError(f"round {self.round}: non-positive weight in {self.weights}")
        if abs(math.fsum(self.weights) - 1.0) > WEIGHT_TOLERANCE:
            raise ConfigurationError(f"round {self.round}: weights sum to {math.fsum(self.weights)!r}")
