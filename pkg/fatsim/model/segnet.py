# fatsim/model/segnet.py
"""
One-level encoder/decoder with a skip connection:

    x -> conv3x3(Cin->F)+ReLU = s
      -> conv3x3/2(F->2F)+ReLU -> conv3x3(2F->2F)+ReLU -> upsample x2
      -> concat(., s) (3F) -> conv3x3(3F->F)+ReLU -> conv1x1(F->C) = logits
"""

from typing import Optional

import numpy as np

from fatsim import rng
from fatsim.autodiff import GradTape, Tensor, concat_channels, conv2d, relu, softmax_channels, upsample_nearest2x
from fatsim.errors import ShapeError
from fatsim.model.params import ArchDescriptor, Layer, ModelParams, layout


def init_model(desc: ArchDescriptor, seed: int) -> ModelParams:
    """He-normal kernels (std sqrt(2 / fan_in)), zero biases, from a seeded stream."""
    gen = rng.stream(seed, "init")
    layers = []
    for spec in layout(desc):
        cout, cin, kh, kw = spec.kernel_shape
        std = np.sqrt(2.0 / (cin * kh * kw))
        kernel = gen.normal(0.0, std, size=spec.kernel_shape)
        layers.append(Layer(spec.name, Tensor(kernel), Tensor(np.zeros(cout))))
    return ModelParams(desc, tuple(layers))


def _conv(params: ModelParams, name: str, x: Tensor, tape: Optional[GradTape]) -> Tensor:
    spec = next(s for s in layout(params.desc) if s.name == name)
    layer = params.layer(name)
    return conv2d(x, layer.kernel, layer.bias, stride=spec.stride, padding=spec.padding, tape=tape)


def forward(params: ModelParams, x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Logits [B, C, H, W] for input [B, Cin, H, W]. H and W must be even."""
    if len(x.shape) != 4:
        raise ShapeError(f"forward input must be [B,Cin,H,W], got shape {x.shape}")
    _, cin, h, w = x.shape
    if cin != params.desc.in_channels:
        raise ShapeError(f"input shape {x.shape} has {cin} channels, model expects {params.desc.in_channels}")
    if h % 2 or w % 2:
        raise ShapeError(f"input spatial size must be divisible by 2, got shape {x.shape}")

    skip = relu(_conv(params, "enc1", x, tape), tape)
    h1 = relu(_conv(params, "down", skip, tape), tape)
    h2 = relu(_conv(params, "mid", h1, tape), tape)
    up = upsample_nearest2x(h2, tape)
    merged = concat_channels(up, skip, tape)
    h3 = relu(_conv(params, "dec", merged, tape), tape)
    return _conv(params, "head", h3, tape)


def predict_proba(params: ModelParams, x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    return softmax_channels(forward(params, x, tape), tape)


def predict_labels(params: ModelParams, x: Tensor) -> np.ndarray:
    """Argmax class map [B, H, W] (ties -> lowest index)."""
    return np.argmax(forward(params, x).data, axis=1)
