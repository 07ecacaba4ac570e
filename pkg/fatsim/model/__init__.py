from fatsim.model.params import (
    ArchDescriptor,
    Layer,
    LayerSpec,
    ModelParams,
    axpy,
    check_same_descriptor,
    layout,
    parameter_count,
)
from fatsim.model.segnet import forward, init_model, predict_labels, predict_proba

__all__ = [
    "ArchDescriptor",
    "Layer",
    "LayerSpec",
    "ModelParams",
    "axpy",
    "check_same_descriptor",
    "forward",
    "init_model",
    "layout",
    "parameter_count",
    "predict_labels",
    "predict_proba",
]
