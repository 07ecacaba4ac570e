# fatsim/federation/aggregate.py
from typing import Sequence

import numpy as np

from fatsim.errors import ConfigurationError
from fatsim.federation.schedule import normalized_weights
from fatsim.model import ModelParams, check_same_descriptor


def weighted_average(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """sum_k w_k * model_k per element, accumulated in 64-bit. Weights are used as given."""
    if not models:
        raise ConfigurationError("cannot aggregate an empty model list")
    if len(models) != len(weights):
        raise ConfigurationError(f"{len(models)} models but {len(weights)} weights")
    for m in models[1:]:
        check_same_descriptor(models[0], m)
    arrays = [m.arrays() for m in models]
    out = {}
    for name, _ in models[0].named_tensors():
        acc = None
        for a, w in zip(arrays, weights):
            term = float(w) * a[name].astype(np.float64)
            acc = term if acc is None else acc + term
        out[name] = acc
    return ModelParams.from_arrays(models[0].desc, out)


def aggregate(models: Sequence[ModelParams], sample_counts: Sequence[int]) -> ModelParams:
    """FedAvg: weights N_k / sum N."""
    if not models:
        raise ConfigurationError("cannot aggregate an empty model list")
    if len(models) != len(sample_counts):
        raise ConfigurationError(f"{len(models)} models but {len(sample_counts)} sample counts")
    if any(int(n) <= 0 for n in sample_counts):
        raise ConfigurationError(f"sample counts must be positive, got {list(sample_counts)}")
    return weighted_average(models, normalized_weights([float(n) for n in sample_counts]))
