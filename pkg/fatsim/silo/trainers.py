# fatsim/silo/trainers.py
"""
Local training at a silo.

  supervised_training    one model, Dice+CE against ground truth, plain SGD.
  unsupervised_training  online model xi trained on mixup inputs against argmax
                         pseudo-labels of the mixed target outputs; the target
                         theta follows xi by EMA after every step; theta is
                         what goes back to the server.
  threshold_selftrain    single-model baseline: confident clean-input
                         predictions supervise an intensity-shifted view.

Every trainer draws from its own stream (seed, silo id, round), so results do
not depend on which worker runs them or in what order. Draw order inside a
stream: one permutation per epoch, then per step one mixup lambda
(unsupervised) or one intensity shift (self-training).
"""

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from loguru import logger

from fatsim import rng
from fatsim.augment import intensity_shift, mixup, pseudo_label, sample_lambda
from fatsim.autodiff import GradTape, Tensor
from fatsim.errors import ConfigurationError
from fatsim.losses import LabelMap, dice_ce_loss
from fatsim.model import ModelParams, axpy, check_same_descriptor, predict_proba
from fatsim.silo.config import LocalTrainConfig
from fatsim.silo.dataset import SiloDataset


@dataclass(frozen=True)
class StepResult:
    params: ModelParams  # the model SGD just updated (theta, or xi when unsupervised)
    loss: float
    tape: GradTape
    target: Optional[ModelParams] = None  # EMA target after the step (unsupervised only)
    lam: Optional[float] = None
    n_masked: int = 0


@dataclass(frozen=True)
class LocalUpdate:
    """What a silo hands back to the server after a round."""

    silo_id: int
    params: ModelParams
    n_samples: int
    n_steps: int
    mean_loss: float


# ----------------------------------------------------------
# Primitives
# ----------------------------------------------------------
def ema_update(theta: ModelParams, xi: ModelParams, tau: float) -> ModelParams:
    """theta <- tau * theta + (1 - tau) * xi."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"EMA decay must lie in (0, 1), got {tau}")
    check_same_descriptor(theta, xi)
    return theta.combine(xi, lambda t, x: tau * t + (1.0 - tau) * x)


def sgd_step(
    params: ModelParams,
    x: Tensor,
    y: LabelMap,
    lr: float,
    include_background: bool = True,
    mask: Optional[np.ndarray] = None,
) -> StepResult:
    """One plain SGD step on DL(p, y) + CE(p, y) with p = softmax(f(x))."""
    tape = GradTape()
    probs = predict_proba(params, x, tape)
    loss = dice_ce_loss(probs, y, tape, mask=mask, include_background=include_background)
    grads = ModelParams.from_gradients(params, tape.backward(loss.value))
    return StepResult(axpy(params, -lr, grads), loss.scalar, tape)


def threshold_mask(probs: Tensor, threshold: float) -> np.ndarray:
    """True where the max class probability reaches `threshold` (pixel kept)."""
    return probs.data.max(axis=1) >= threshold


def supervised_step(theta: ModelParams, x: Tensor, y: LabelMap, cfg: LocalTrainConfig) -> StepResult:
    return sgd_step(theta, x, y, cfg.lr_theta, cfg.dice_include_background)


def unsupervised_step(
    xi: ModelParams,
    theta: ModelParams,
    x1: Tensor,
    x2: Tensor,
    lam: float,
    cfg: LocalTrainConfig,
) -> StepResult:
    # target passes run without a tape: no gradient can reach theta
    p1 = predict_proba(theta, x1)
    p2 = predict_proba(theta, x2)
    y = pseudo_label(mixup(p1, p2, lam))
    step = sgd_step(xi, mixup(x1, x2, lam), y, cfg.lr_xi, cfg.dice_include_background)
    target = ema_update(theta, step.params, cfg.ema_decay)
    return StepResult(step.params, step.loss, step.tape, target=target, lam=lam)


def selftrain_step(
    theta: ModelParams,
    x: Tensor,
    cfg: LocalTrainConfig,
    threshold: float,
    gen: np.random.Generator,
) -> StepResult:
    clean = predict_proba(theta, x)
    y = pseudo_label(clean)
    keep = threshold_mask(clean, threshold)
    shifted = intensity_shift(x, cfg.intensity_level, gen)
    step = sgd_step(theta, shifted, y, cfg.lr_theta, cfg.dice_include_background, mask=keep)
    return StepResult(step.params, step.loss, step.tape, n_masked=int(keep.size - keep.sum()))


# ----------------------------------------------------------
# Batching
# ----------------------------------------------------------
def _batches(perm: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]


def _batch_pairs(perm: np.ndarray, batch_size: int) -> List[tuple]:
    # consecutive disjoint batches; the epoch ends when < 2 * batch_size remain
    pairs = []
    i = 0
    while i + 2 * batch_size <= len(perm):
        pairs.append((perm[i : i + batch_size], perm[i + batch_size : i + 2 * batch_size]))
        i += 2 * batch_size
    return pairs


def _require_size(silo: SiloDataset, needed: int) -> None:
    if silo.n_samples < needed:
        raise ConfigurationError(f"silo {silo.silo_id} has {silo.n_samples} samples, needs at least {needed}")


# ----------------------------------------------------------
# Local training loops
# ----------------------------------------------------------
def fit_supervised(
    silo: SiloDataset,
    theta: ModelParams,
    cfg: LocalTrainConfig,
    round_index: int = 0,
    gen: Optional[np.random.Generator] = None,
) -> LocalUpdate:
    """`gen` overrides the per-round stream (centralized training keeps one stream for the whole run)."""
    if not silo.supervised:
        raise ConfigurationError(f"supervised training requested on unsupervised silo {silo.silo_id}")
    _require_size(silo, cfg.batch_size)
    if gen is None:
        gen = rng.silo_stream(cfg.seed, silo.silo_id, round_index, "supervised")
    losses = []
    for _ in range(cfg.epochs):
        for idx in _batches(gen.permutation(silo.n_samples), cfg.batch_size):
            step = supervised_step(theta, silo.batch(idx), silo.batch_labels(idx), cfg)
            theta = step.params
            losses.append(step.loss)
    logger.debug("silo {} supervised: {} steps, mean loss {:.4f}", silo.silo_id, len(losses), float(np.mean(losses)))
    return LocalUpdate(silo.silo_id, theta, silo.n_samples, len(losses), float(np.mean(losses)))


def fit_unsupervised(
    silo: SiloDataset, theta_global: ModelParams, cfg: LocalTrainConfig, round_index: int = 0
) -> LocalUpdate:
    if silo.supervised:
        raise ConfigurationError(f"unsupervised training requested on supervised silo {silo.silo_id}")
    _require_size(silo, 2 * cfg.batch_size)
    gen = rng.silo_stream(cfg.seed, silo.silo_id, round_index, "unsupervised")
    xi = theta_global
    theta = theta_global
    losses = []
    for _ in range(cfg.epochs):
        for idx1, idx2 in _batch_pairs(gen.permutation(silo.n_samples), cfg.batch_size):
            lam = sample_lambda(gen, cfg.mixup_lambda, cfg.mixup_low, cfg.mixup_high)
            step = unsupervised_step(xi, theta, silo.batch(idx1), silo.batch(idx2), lam, cfg)
            xi, theta = step.params, step.target
            losses.append(step.loss)
    logger.debug("silo {} unsupervised: {} steps, mean loss {:.4f}", silo.silo_id, len(losses), float(np.mean(losses)))
    # the online model is discarded; the target goes back to the server
    return LocalUpdate(silo.silo_id, theta, silo.n_samples, len(losses), float(np.mean(losses)))


def fit_selftrain(
    silo: SiloDataset,
    theta: ModelParams,
    cfg: LocalTrainConfig,
    threshold: Optional[float] = None,
    round_index: int = 0,
) -> LocalUpdate:
    if silo.supervised:
        raise ConfigurationError(f"threshold self-training requested on supervised silo {silo.silo_id}")
    threshold = cfg.sota_threshold if threshold is None else threshold
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    _require_size(silo, cfg.batch_size)
    gen = rng.silo_stream(cfg.seed, silo.silo_id, round_index, "selftrain")
    losses, masked = [], 0
    for _ in range(cfg.epochs):
        for idx in _batches(gen.permutation(silo.n_samples), cfg.batch_size):
            step = selftrain_step(theta, silo.batch(idx), cfg, threshold, gen)
            theta = step.params
            losses.append(step.loss)
            masked += step.n_masked
    logger.debug("silo {} self-training: {} steps, {} pixels masked", silo.silo_id, len(losses), masked)
    return LocalUpdate(silo.silo_id, theta, silo.n_samples, len(losses), float(np.mean(losses)))


def supervised_training(
    silo: SiloDataset, theta: ModelParams, cfg: LocalTrainConfig, round_index: int = 0
) -> ModelParams:
    return fit_supervised(silo, theta, cfg, round_index).params


def unsupervised_training(
    silo: SiloDataset, theta_global: ModelParams, cfg: LocalTrainConfig, round_index: int = 0
) -> ModelParams:
    return fit_unsupervised(silo, theta_global, cfg, round_index).params


def threshold_selftrain(
    silo: SiloDataset,
    theta: ModelParams,
    cfg: LocalTrainConfig,
    threshold: Optional[float] = None,
    round_index: int = 0,
) -> ModelParams:
    return fit_selftrain(silo, theta, cfg, threshold, round_index).params
