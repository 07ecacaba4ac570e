# fatsim/autodiff/gradcheck.py
"""
Finite-difference verification of tape gradients.

`f(params, tape)` must return a single-element Tensor. It is evaluated once
with a tape (to get analytic gradients) and twice per checked scalar without one.
`params` is either a ModelParams or a plain mapping name -> Tensor.
"""

from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from loguru import logger

from fatsim.autodiff.ops import trace_relu_patterns
from fatsim.autodiff.tensor import GradTape, Tensor, compute_dtype
from fatsim.errors import NonFiniteError

ParamsLike = Union["ModelParams", Mapping[str, Tensor]]  # noqa: F821
ScalarFn = Callable[[ParamsLike, Optional[GradTape]], Tensor]


def _named(params: ParamsLike) -> List[Tuple[str, Tensor]]:
    if isinstance(params, Mapping):
        return list(params.items())
    return list(params.named_tensors())


def _replace(params: ParamsLike, name: str, tensor: Tensor) -> ParamsLike:
    if isinstance(params, Mapping):
        out: Dict[str, Tensor] = dict(params)
        out[name] = tensor
        return out
    return params.with_tensor(name, tensor)


def _scalar(f: ScalarFn, params: ParamsLike) -> float:
    value = f(params, None).item()
    if not np.isfinite(value):
        raise NonFiniteError(f"finite_diff_check: f returned {value}")
    return value


# resolvable_only compares only gradients at least this many times the
# float resolution of the difference quotient
RESOLUTION_FACTOR = 1000.0


def resolution_floor(value: float, eps: float, dtype=None) -> float:
    """Smallest |gradient| a central difference with step `eps` resolves at |f| ~ `value`."""
    machine_eps = float(np.finfo(dtype or compute_dtype()).eps)
    return RESOLUTION_FACTOR * machine_eps * max(abs(value), 1.0) / eps


def finite_diff_check(
    f: ScalarFn,
    params: ParamsLike,
    eps: float,
    n_probes: int,
    seed: int,
    avoid_kinks: bool = False,
    resolvable_only: bool = False,
) -> float:
    """
    Compare central differences against tape gradients on `n_probes` randomly
    chosen scalar parameters. Returns max |g_fd - g_ad| / max(|g_fd|, |g_ad|, 1e-8).

    avoid_kinks      skip parameters whose +-eps step changes any relu pattern
    resolvable_only  skip parameters whose tape gradient is below resolution_floor

    With either filter on, parameters are visited in a seeded random order
    without repetition until `n_probes` pass; fewer is accepted when the model
    runs out, none is an error.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if n_probes < 1:
        raise ValueError(f"n_probes must be >= 1, got {n_probes}")

    named = _named(params)
    tape = GradTape()
    with trace_relu_patterns() as base_pattern:
        loss = f(params, tape)
    if not np.isfinite(loss.item()):
        raise NonFiniteError(f"finite_diff_check: f returned {loss.item()}")
    grads = tape.backward(loss)

    sizes = np.array([t.size for _, t in named], dtype=np.int64)
    total = int(sizes.sum())
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)

    filtered = avoid_kinks or resolvable_only
    floor = resolution_floor(loss.item(), eps) if resolvable_only else 0.0
    candidates = rng.permutation(total) if filtered else rng.integers(0, total, size=n_probes)

    worst = 0.0
    checked = skipped = 0
    for flat in candidates:
        if checked == n_probes:
            break
        slot = int(np.searchsorted(offsets, flat, side="right") - 1)
        name, tensor = named[slot]
        idx = int(flat - offsets[slot])

        g_ad = float(grads.of(tensor).reshape(-1)[idx])
        if abs(g_ad) < floor:
            skipped += 1
            continue
        base = tensor.numpy().reshape(-1)
        plus, minus = base.copy(), base.copy()
        plus[idx] += eps
        minus[idx] -= eps
        with trace_relu_patterns() as plus_pattern:
            f_plus = _scalar(f, _replace(params, name, Tensor(plus.reshape(tensor.shape))))
        with trace_relu_patterns() as minus_pattern:
            f_minus = _scalar(f, _replace(params, name, Tensor(minus.reshape(tensor.shape))))
        if avoid_kinks and (plus_pattern != base_pattern or minus_pattern != base_pattern):
            skipped += 1
            continue
        # use the step actually representable in the compute dtype
        step = float(plus[idx]) - float(minus[idx])
        g_fd = (f_plus - f_minus) / step if step != 0 else 0.0

        rel = abs(g_fd - g_ad) / max(abs(g_fd), abs(g_ad), 1e-8)
        logger.debug("gradcheck {}[{}]: fd={:.6g} ad={:.6g} rel={:.3g}", name, idx, g_fd, g_ad, rel)
        worst = max(worst, rel)
        checked += 1

    if checked == 0:
        raise ValueError(f"finite_diff_check: all {skipped} candidate parameters were filtered out")
    if skipped:
        logger.debug("gradcheck: checked {} parameters, skipped {}", checked, skipped)
    return worst
