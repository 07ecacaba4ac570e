import math

import numpy as np
import pytest

from fatsim.autodiff import GradTape, Tensor, finite_diff_check, precision
from fatsim.errors import ProbabilityError, ShapeError
from fatsim.losses import (
    DICE_SMOOTH,
    LabelMap,
    cross_entropy,
    dice_ce_loss,
    dice_score,
    per_class_dice,
    soft_dice_loss,
)


def random_probs(gen, shape):
    e = np.exp(gen.normal(size=shape))
    return e / e.sum(axis=1, keepdims=True)


# -------------------------
# LabelMap
# -------------------------
def test_labelmap_rejects_out_of_range():
    with pytest.raises(ValueError):
        LabelMap(np.full((1, 2, 2), 3), 3)


def test_labelmap_one_hot():
    y = LabelMap(np.array([[[0, 2], [1, 0]]]), 3)
    oh = y.one_hot()
    assert oh.shape == (1, 3, 2, 2)
    np.testing.assert_array_equal(oh.argmax(axis=1), y.values)


# -------------------------
# Soft Dice
# -------------------------
def test_dice_loss_perfect_prediction():
    y = LabelMap(np.random.default_rng(0).integers(0, 3, size=(2, 4, 4)), 3)
    assert soft_dice_loss(Tensor(y.one_hot()), y).scalar <= 1e-4


def test_dice_loss_disjoint_prediction():
    y = LabelMap(np.zeros((1, 4, 4), dtype=np.int64), 2)
    probs = np.zeros((1, 2, 4, 4))
    probs[:, 1] = 1.0
    assert soft_dice_loss(Tensor(probs), y).scalar == pytest.approx(1.0, abs=1e-4)


def test_dice_loss_uniform_single_pixel_formula():
    y = LabelMap(np.zeros((1, 1, 1), dtype=np.int64), 2)
    probs = Tensor(np.full((1, 2, 1, 1), 0.5))
    e = DICE_SMOOTH
    term0 = (2 * 0.5 + e) / (0.5 + 1 + e)
    term1 = (0 + e) / (0.5 + 0 + e)
    assert soft_dice_loss(probs, y).scalar == pytest.approx(1 - (term0 + term1) / 2, abs=1e-6)


def test_dice_loss_without_background():
    y = LabelMap(np.zeros((1, 1, 1), dtype=np.int64), 2)
    probs = Tensor(np.full((1, 2, 1, 1), 0.5))
    e = DICE_SMOOTH
    term1 = (0 + e) / (0.5 + 0 + e)
    assert soft_dice_loss(probs, y, include_background=False).scalar == pytest.approx(1 - term1, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_dice_loss_decreases_towards_target(seed):
    gen = np.random.default_rng(seed)
    y = LabelMap(gen.integers(0, 3, size=(1, 4, 4)), 3)
    p0 = random_probs(gen, (1, 3, 4, 4))
    losses = [soft_dice_loss(Tensor((1 - t) * p0 + t * y.one_hot()), y).scalar for t in np.linspace(0, 1, 5)]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert all(-1e-6 <= v <= 1 for v in losses)


def test_dice_loss_rejects_invalid_probabilities():
    y = LabelMap(np.zeros((1, 2, 2), dtype=np.int64), 2)
    with pytest.raises(ProbabilityError):
        soft_dice_loss(Tensor(np.full((1, 2, 2, 2), 0.9)), y)


def test_loss_rejects_label_shape_mismatch():
    with pytest.raises(ShapeError):
        soft_dice_loss(Tensor(np.full((1, 2, 2, 2), 0.5)), LabelMap(np.zeros((1, 3, 3), dtype=np.int64), 2))


# -------------------------
# Cross-entropy
# -------------------------
def test_ce_perfect_prediction():
    y = LabelMap(np.random.default_rng(1).integers(0, 3, size=(2, 3, 3)), 3)
    assert cross_entropy(Tensor(y.one_hot()), y).scalar <= 1e-6


@pytest.mark.parametrize("c", [2, 3, 5])
def test_ce_uniform_is_log_c(c):
    y = LabelMap(np.random.default_rng(c).integers(0, c, size=(1, 3, 3)), c)
    assert cross_entropy(Tensor(np.full((1, c, 3, 3), 1.0 / c)), y).scalar == pytest.approx(math.log(c), abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_ce_matches_pixel_loop(seed):
    gen = np.random.default_rng(10 + seed)
    probs = Tensor(random_probs(gen, (2, 3, 3, 4)))
    y = LabelMap(gen.integers(0, 3, size=(2, 3, 4)), 3)
    p = probs.data.astype(np.float64)
    total, count = 0.0, 0
    for b in range(2):
        for i in range(3):
            for j in range(4):
                total += -math.log(max(p[b, y.values[b, i, j], i, j], 1e-7))
                count += 1
    assert cross_entropy(probs, y).scalar == pytest.approx(total / count, abs=1e-6)


def test_ce_clamps_zero_probability():
    y = LabelMap(np.zeros((1, 1, 1), dtype=np.int64), 2)
    probs = Tensor(np.array([0.0, 1.0]).reshape(1, 2, 1, 1))
    assert cross_entropy(probs, y).scalar == pytest.approx(-math.log(1e-7), rel=1e-5)


@pytest.mark.parametrize("seed", range(4))
def test_ce_gradient_finite_difference(seed):
    gen = np.random.default_rng(20 + seed)
    with precision(np.float64):
        probs = {"p": Tensor(random_probs(gen, (1, 3, 3, 3)))}
        y = LabelMap(gen.integers(0, 3, size=(1, 3, 3)), 3)
        err = finite_diff_check(lambda q, tape: cross_entropy(q["p"], y, tape).value, probs, 1e-6, 10, seed)
    assert err < 1e-2


@pytest.mark.parametrize("seed", range(4))
def test_dice_gradient_finite_difference(seed):
    gen = np.random.default_rng(30 + seed)
    with precision(np.float64):
        probs = {"p": Tensor(random_probs(gen, (1, 3, 3, 3)))}
        y = LabelMap(gen.integers(0, 3, size=(1, 3, 3)), 3)
        err = finite_diff_check(lambda q, tape: soft_dice_loss(q["p"], y, tape).value, probs, 1e-6, 10, seed)
    assert err < 1e-2


def test_fully_masked_loss_is_zero_with_zero_gradient():
    gen = np.random.default_rng(40)
    probs = Tensor(random_probs(gen, (1, 3, 4, 4)))
    y = LabelMap(gen.integers(0, 3, size=(1, 4, 4)), 3)
    tape = GradTape()
    loss = dice_ce_loss(probs, y, tape, mask=np.zeros((1, 4, 4), dtype=bool))
    grads = tape.backward(loss.value)
    assert loss.n_active == 0 and loss.n_pixels == 16
    assert np.all(grads.of(probs) == 0)


@pytest.mark.parametrize("seed", range(5))
def test_combined_loss_is_finite(seed):
    gen = np.random.default_rng(50 + seed)
    probs = np.zeros((2, 3, 4, 4))
    probs[:, int(gen.integers(0, 3))] = 1.0
    y = LabelMap(gen.integers(0, 3, size=(2, 4, 4)), 3)
    assert math.isfinite(dice_ce_loss(Tensor(probs), y).scalar)


# -------------------------
# Dice score
# -------------------------
def test_dice_score_identical():
    y = LabelMap(np.array([[[0, 1], [2, 1]]]), 3)
    assert dice_score(y, y, 1) == 1.0


def test_dice_score_disjoint():
    a = LabelMap(np.array([[[1, 1], [0, 0]]]), 2)
    b = LabelMap(np.array([[[0, 0], [1, 1]]]), 2)
    assert dice_score(a, b, 1) == 0.0


def test_dice_score_analytic():
    pred = np.zeros((1, 4, 4), dtype=np.int64)
    truth = np.zeros((1, 4, 4), dtype=np.int64)
    pred[0, 0, :4] = 1  # |A| = 4
    truth[0, 0, 1:4] = 1  # 3 shared
    truth[0, 1, :3] = 1  # |B| = 6
    assert dice_score(LabelMap(pred, 2), LabelMap(truth, 2), 1) == pytest.approx(0.6)


def test_dice_score_both_empty_is_one():
    y = LabelMap(np.zeros((1, 2, 2), dtype=np.int64), 3)
    assert dice_score(y, y, 2) == 1.0


def test_dice_score_rejects_class_out_of_range():
    y = LabelMap(np.zeros((1, 2, 2), dtype=np.int64), 3)
    with pytest.raises(ValueError):
        dice_score(y, y, 3)


@pytest.mark.parametrize("seed", range(5))
def test_dice_score_bounded_and_symmetric(seed):
    gen = np.random.default_rng(60 + seed)
    a = LabelMap(gen.integers(0, 3, size=(2, 5, 5)), 3)
    b = LabelMap(gen.integers(0, 3, size=(2, 5, 5)), 3)
    for c in range(3):
        assert 0.0 <= dice_score(a, b, c) <= 1.0
        assert dice_score(a, b, c) == dice_score(b, a, c)
    assert len(per_class_dice(a, b)) == 3
