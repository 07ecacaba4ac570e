# fatsim/autodiff/tensor.py
"""
Dense tensors and the gradient tape.

A Tensor is an immutable float array (32-bit by default). A GradTape records
every op executed against it, in order, together with a closure that maps the
output gradient to input gradients. backward() replays the record in exact
reverse order. Ops called without a tape record nothing, which is how target
(teacher) forward passes stay gradient-free.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from fatsim.errors import NonFiniteError, ShapeError

_COMPUTE_DTYPE: ContextVar[type] = ContextVar("fatsim_compute_dtype", default=np.float32)


def compute_dtype() -> type:
    return _COMPUTE_DTYPE.get()


@contextmanager
def precision(dtype) -> Iterator[None]:
    """
    Temporarily switch the tensor dtype for the current context.
    Training always runs at float32; float64 is used by gradient verification.
    """
    token = _COMPUTE_DTYPE.set(np.dtype(dtype).type)
    try:
        yield
    finally:
        _COMPUTE_DTYPE.reset(token)


class Tensor:
    """Immutable dense array with a fixed shape."""

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=compute_dtype())
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"tensor of shape {arr.shape} holds NaN/Inf")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def _wrap(cls, arr: np.ndarray, op: str) -> "Tensor":
        # op outputs: cast once, check finiteness, no extra copy
        arr = np.asarray(arr, dtype=compute_dtype())
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"{op} produced NaN/Inf (output shape {arr.shape})")
        if not arr.flags.owndata or not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        out = cls.__new__(cls)
        out._data = arr
        return out

    @classmethod
    def zeros(cls, shape: Sequence[int]) -> "Tensor":
        return cls(np.zeros(tuple(shape)))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._data.shape

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self._data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self._data.dtype})"


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeEntry:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Gradients:
    """Gradients keyed by tensor identity, as returned by GradTape.backward."""

    def __init__(self, grads: Dict[int, np.ndarray]):
        self._grads = grads

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def of(self, tensor: Tensor) -> np.ndarray:
        """Gradient for `tensor`; zeros if the loss does not depend on it."""
        g = self._grads.get(id(tensor))
        if g is None:
            return np.zeros(tensor.shape, dtype=np.float64)
        return g


@dataclass
class GradTape:
    """Ordered record of executed ops. One tape per forward/backward pass."""

    entries: List[TapeEntry] = field(default_factory=list)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        self.entries.append(TapeEntry(op, tuple(inputs), output, backward))

    def recorded_ids(self) -> set:
        """Identities of every tensor the tape touched (inputs and outputs)."""
        ids = set()
        for entry in self.entries:
            ids.update(id(t) for t in entry.inputs)
            ids.add(id(entry.output))
        return ids

    def backward(self, loss: Tensor) -> Gradients:
        if loss.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones(loss.shape, dtype=np.float64)}
        for entry in reversed(self.entries):
            g_out = grads.get(id(entry.output))
            if g_out is None:
                continue
            for tensor, g_in in zip(entry.inputs, entry.backward(g_out)):
                if g_in is None:
                    continue
                if g_in.shape != tensor.shape:
                    raise ShapeError(
                        f"{entry.op} backward produced gradient shape {g_in.shape} for input {tensor.shape}"
                    )
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g_in
                else:
                    grads[key] = np.asarray(g_in, dtype=np.float64)
        return Gradients(grads)
