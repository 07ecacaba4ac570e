# fatsim/model/params.py
"""
Model parameters as an immutable value.

The architecture is fixed by an ArchDescriptor (Cin, F, C); LAYOUT below is
the single source of truth for layer names, kernel shapes, strides and
padding. ModelParams serves both as the global/target model and as the online
model, and doubles as the container for gradients.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fatsim.autodiff import Gradients, Tensor
from fatsim.errors import DescriptorMismatchError, ShapeError


class ArchDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = Field(1, ge=1)
    base_width: int = Field(8, ge=2)
    n_classes: int = Field(3, ge=2)


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kernel_shape: Tuple[int, int, int, int]
    stride: int
    padding: int


def layout(desc: ArchDescriptor) -> List[LayerSpec]:
    cin, f, c = desc.in_channels, desc.base_width, desc.n_classes
    return [
        LayerSpec("enc1", (f, cin, 3, 3), 1, 1),
        LayerSpec("down", (2 * f, f, 3, 3), 2, 1),
        LayerSpec("mid", (2 * f, 2 * f, 3, 3), 1, 1),
        LayerSpec("dec", (f, 3 * f, 3, 3), 1, 1),
        LayerSpec("head", (c, f, 1, 1), 1, 0),
    ]


def parameter_count(desc: ArchDescriptor) -> int:
    return sum(int(np.prod(s.kernel_shape)) + s.kernel_shape[0] for s in layout(desc))


@dataclass(frozen=True)
class Layer:
    name: str
    kernel: Tensor
    bias: Tensor


@dataclass(frozen=True)
class ModelParams:
    desc: ArchDescriptor
    layers: Tuple[Layer, ...]

    def __post_init__(self):
        specs = layout(self.desc)
        if [l.name for l in self.layers] != [s.name for s in specs]:
            raise DescriptorMismatchError(
                f"layer names {[l.name for l in self.layers]} do not match layout {[s.name for s in specs]}"
            )
        for layer, spec in zip(self.layers, specs):
            if layer.kernel.shape != spec.kernel_shape:
                raise ShapeError(
                    f"layer {layer.name}: kernel shape {layer.kernel.shape} != expected {spec.kernel_shape}"
                )
            if layer.bias.shape != (spec.kernel_shape[0],):
                raise ShapeError(
                    f"layer {layer.name}: bias shape {layer.bias.shape} != expected {(spec.kernel_shape[0],)}"
                )

    # -------------------------
    # Construction
    # -------------------------
    @classmethod
    def from_arrays(cls, desc: ArchDescriptor, arrays: Mapping[str, np.ndarray]) -> "ModelParams":
        """Build from a flat mapping "layer.kernel" / "layer.bias" -> array."""
        layers = []
        for spec in layout(desc):
            try:
                kernel = arrays[f"{spec.name}.kernel"]
                bias = arrays[f"{spec.name}.bias"]
            except KeyError as e:
                raise DescriptorMismatchError(f"missing tensor {e.args[0]} for descriptor {desc}") from e
            layers.append(Layer(spec.name, Tensor(kernel), Tensor(bias)))
        return cls(desc, tuple(layers))

    @classmethod
    def zeros(cls, desc: ArchDescriptor) -> "ModelParams":
        return cls.from_arrays(
            desc,
            {
                key: np.zeros(shape)
                for spec in layout(desc)
                for key, shape in ((f"{spec.name}.kernel", spec.kernel_shape), (f"{spec.name}.bias", (spec.kernel_shape[0],)))
            },
        )

    @classmethod
    def from_gradients(cls, params: "ModelParams", grads: Gradients) -> "ModelParams":
        """Gradient of a loss w.r.t. every tensor of `params`, as a ModelParams."""
        return cls.from_arrays(params.desc, {name: grads.of(t) for name, t in params.named_tensors()})

    # -------------------------
    # Access
    # -------------------------
    def named_tensors(self) -> Iterator[Tuple[str, Tensor]]:
        for layer in self.layers:
            yield f"{layer.name}.kernel", layer.kernel
            yield f"{layer.name}.bias", layer.bias

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_tensors()}

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    def with_tensor(self, name: str, tensor: Tensor) -> "ModelParams":
        arrays = self.arrays()
        if name not in arrays:
            raise KeyError(name)
        arrays[name] = tensor.data
        return ModelParams.from_arrays(self.desc, arrays)

    @property
    def n_params(self) -> int:
        return sum(t.size for _, t in self.named_tensors())

    def flat(self) -> np.ndarray:
        return np.concatenate([t.data.reshape(-1).astype(np.float64) for _, t in self.named_tensors()])

    def equal(self, other: "ModelParams") -> bool:
        """Bitwise equality of every tensor (and the descriptor)."""
        return self.desc == other.desc and all(
            np.array_equal(a.data, b.data) for (_, a), (_, b) in zip(self.named_tensors(), other.named_tensors())
        )

    def combine(self, other: "ModelParams", fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "ModelParams":
        """Elementwise fn(self, other) in 64-bit, cast back on construction."""
        check_same_descriptor(self, other)
        return ModelParams.from_arrays(
            self.desc,
            {
                name: fn(a.data.astype(np.float64), b.data.astype(np.float64))
                for (name, a), (_, b) in zip(self.named_tensors(), other.named_tensors())
            },
        )


def check_same_descriptor(a: ModelParams, b: ModelParams) -> None:
    if a.desc != b.desc:
        raise DescriptorMismatchError(f"descriptor mismatch: {a.desc} vs {b.desc}")


def axpy(dst: ModelParams, scale: float, src: ModelParams) -> ModelParams:
    """dst + scale * src, as a new value."""
    return dst.combine(src, lambda d, s: d + scale * s)
