# fatsim/autodiff/ops.py
"""
The closed set of differentiable ops the segmentation model needs.

Every op takes an optional `tape`. With a tape the op is recorded and its
backward closure captures whatever it needs; without one nothing is kept.
Reductions inside conv2d and sum_all accumulate in 64-bit, outputs are cast
back to the active compute dtype.
"""

from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator, List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from fatsim.autodiff.tensor import GradTape, Tensor
from fatsim.errors import ShapeError


def _require_4d(x: Tensor, what: str) -> Tuple[int, int, int, int]:
    if len(x.shape) != 4:
        raise ShapeError(f"{what} must be 4-D [B,C,H,W], got shape {x.shape}")
    return x.shape  # type: ignore[return-value]


# ----------------------------------------------------------
# Convolution
# ----------------------------------------------------------
def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # (B, Cin, Ho, Wo, kH, kW) view over the padded input
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor,
    stride: int = 1,
    padding: int = 0,
    tape: Optional[GradTape] = None,
) -> Tensor:
    """
    2-D cross-correlation. Output size per axis is floor((H + 2p - k) / stride) + 1.
    Gradients flow to input, kernel and bias.
    """
    b, cin, h, w = _require_4d(x, "conv2d input")
    if len(kernel.shape) != 4:
        raise ShapeError(f"conv2d kernel must be 4-D [Cout,Cin,kH,kW], got shape {kernel.shape}")
    cout, kcin, kh, kw = kernel.shape
    if kcin != cin:
        raise ShapeError(f"conv2d input shape {x.shape} does not match kernel shape {kernel.shape}")
    if bias.shape != (cout,):
        raise ShapeError(f"conv2d bias shape {bias.shape} does not match kernel shape {kernel.shape}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d kernel spatial size must be odd, got kernel shape {kernel.shape}")
    if stride not in (1, 2):
        raise ShapeError(f"conv2d stride must be 1 or 2, got {stride}")
    if padding < 0:
        raise ShapeError(f"conv2d padding must be >= 0, got {padding}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError(f"conv2d input shape {x.shape} is smaller than kernel shape {kernel.shape}")

    ho = conv_output_size(h, kh, stride, padding)
    wo = conv_output_size(w, kw, stride, padding)

    xp = np.pad(x.data.astype(np.float64), ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = _windows(xp, kh, kw, stride, ho, wo)
    # im2col: rows are (b, ho, wo), columns are (cin, kh, kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * ho * wo, cin * kh * kw)
    k2 = kernel.data.astype(np.float64).reshape(cout, cin * kh * kw)
    out = cols @ k2.T + bias.data.astype(np.float64)
    out = out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2)
    result = Tensor._wrap(out, "conv2d")

    if tape is not None:

        def backward(g: np.ndarray):
            g2 = g.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout)
            d_kernel = (g2.T @ cols).reshape(kernel.shape)
            d_bias = g2.sum(axis=0)
            d_cols = (g2 @ k2).reshape(b, ho, wo, cin, kh, kw)
            d_xp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    d_xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += d_cols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
            d_x = d_xp[:, :, padding : padding + h, padding : padding + w]
            return d_x, d_kernel, d_bias

        tape.record("conv2d", (x, kernel, bias), result, backward)
    return result


# ----------------------------------------------------------
# Elementwise / layout ops
# ----------------------------------------------------------
_RELU_TRACE: ContextVar[Optional[List[bytes]]] = ContextVar("fatsim_relu_trace", default=None)


@contextmanager
def trace_relu_patterns() -> Iterator[List[bytes]]:
    """
    Collect the active-unit pattern of every relu evaluated in this context,
    in call order. Two evaluations of the same graph lie on the same linear
    piece iff their collected patterns are equal.
    """
    patterns: List[bytes] = []
    token = _RELU_TRACE.set(patterns)
    try:
        yield patterns
    finally:
        _RELU_TRACE.reset(token)


def relu(x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """max(0, x); the subgradient at exactly 0 is 0."""
    result = Tensor._wrap(np.maximum(x.data, 0), "relu")
    trace = _RELU_TRACE.get()
    if trace is not None:
        trace.append(np.packbits(x.data > 0).tobytes())
    if tape is not None:
        active = x.data > 0
        tape.record("relu", (x,), result, lambda g: (g * active,))
    return result


def upsample_nearest2x(x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    b, c, h, w = _require_4d(x, "upsample_nearest2x input")
    result = Tensor._wrap(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3), "upsample_nearest2x")
    if tape is not None:
        tape.record(
            "upsample_nearest2x",
            (x,),
            result,
            lambda g: (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),),
        )
    return result


def softmax_channels(logits: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Per-pixel softmax over the channel axis (max-subtracted)."""
    _, c, _, _ = _require_4d(logits, "softmax_channels input")
    if c < 2:
        raise ShapeError(f"softmax_channels needs at least 2 channels, got shape {logits.shape}")
    z = logits.data.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    result = Tensor._wrap(s, "softmax_channels")
    if tape is not None:

        def backward(g: np.ndarray):
            return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

        tape.record("softmax_channels", (logits,), result, backward)
    return result


def concat_channels(a: Tensor, b: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    ba, ca, ha, wa = _require_4d(a, "concat_channels first operand")
    bb, cb, hb, wb = _require_4d(b, "concat_channels second operand")
    if (ba, ha, wa) != (bb, hb, wb):
        raise ShapeError(f"concat_channels batch/spatial mismatch: {a.shape} vs {b.shape}")
    result = Tensor._wrap(np.concatenate([a.data, b.data], axis=1), "concat_channels")
    if tape is not None:
        tape.record("concat_channels", (a, b), result, lambda g: (g[:, :ca], g[:, ca:]))
    return result


def add(a: Tensor, b: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Same-shape elementwise sum (no broadcasting)."""
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} vs {b.shape}")
    result = Tensor._wrap(a.data.astype(np.float64) + b.data, "add")
    if tape is not None:
        tape.record("add", (a, b), result, lambda g: (g, g))
    return result


def mul(a: Tensor, b: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    """Same-shape elementwise product (no broadcasting)."""
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    a64 = a.data.astype(np.float64)
    b64 = b.data.astype(np.float64)
    result = Tensor._wrap(a64 * b64, "mul")
    if tape is not None:
        tape.record("mul", (a, b), result, lambda g: (g * b64, g * a64))
    return result


def sum_all(x: Tensor, tape: Optional[GradTape] = None) -> Tensor:
    result = Tensor._wrap(np.array([x.data.sum(dtype=np.float64)]), "sum_all")
    if tape is not None:
        shape = x.shape
        tape.record("sum_all", (x,), result, lambda g: (np.full(shape, g.reshape(-1)[0]),))
    return result
