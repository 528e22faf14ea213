import math

import mpmath
import numpy as np
import pytest

from kgembed.losses import (
    LossSpec,
    adversarial_weights,
    bce_loss,
    margin_loss,
    self_adversarial_loss,
)


# --- margin ----------------------------------------------------------------


def test_margin_zero_at_gap():
    assert margin_loss(np.array([2.0]), np.array([[1.0]]), margin=1.0) == 0.0


def test_margin_equal_scores():
    assert margin_loss(np.array([0.5]), np.array([[0.5]]), margin=1.0) == pytest.approx(1.0)


def test_margin_matches_scalar_loop():
    rng = np.random.default_rng(0)
    pos = rng.normal(size=16)
    neg = rng.normal(size=(16, 5))
    got = margin_loss(pos, neg, margin=0.7)
    total = 0.0
    for i in range(16):
        for j in range(5):
            total += max(0.0, 0.7 - pos[i] + neg[i, j])
    assert abs(got - total / 80) < 1e-12


def test_margin_negative_gamma_errors():
    with pytest.raises(ValueError):
        margin_loss(np.array([1.0]), np.array([[0.0]]), margin=-0.1)


# --- self-adversarial ------------------------------------------------------


def test_adv_singleton_weight_is_one():
    w = adversarial_weights(np.array([[3.7]]), temperature=9.0)
    assert w[0, 0] == 1.0


def test_adv_equal_scores_uniform_weights():
    w = adversarial_weights(np.full((2, 4), 1.3), temperature=2.0)
    assert np.allclose(w, 0.25)


def test_adv_weights_simplex():
    rng = np.random.default_rng(1)
    w = adversarial_weights(rng.normal(size=(8, 6)), temperature=0.5)
    assert np.allclose(w.sum(axis=1), 1.0)
    assert ((w > 0) & (w < 1)).all()


def test_adv_matches_scalar_loop():
    rng = np.random.default_rng(2)
    pos = rng.normal(size=12)
    neg = rng.normal(size=(12, 4))
    gamma, alpha = 1.5, 0.8
    got = self_adversarial_loss(pos, neg, gamma, alpha)
    total = 0.0
    for i in range(12):
        ws = np.exp(alpha * neg[i])
        ws = ws / ws.sum()
        term = -math.log(1 / (1 + math.exp(-(gamma + pos[i]))))
        for j in range(4):
            term -= ws[j] * math.log(1 / (1 + math.exp(gamma + neg[i, j])))
        total += term
    assert abs(got - total / 12) < 1e-10


def test_adv_bad_temperature():
    with pytest.raises(ValueError):
        self_adversarial_loss(np.array([0.0]), np.array([[0.0]]), 1.0, 0.0)


# --- bce -------------------------------------------------------------------


def test_bce_midpoint_is_log2():
    assert bce_loss(np.array([0.0]), np.array([0.5])) == pytest.approx(math.log(2), abs=1e-15)


def test_bce_saturates_to_zero():
    assert bce_loss(np.array([30.0]), np.array([1.0])) == pytest.approx(0.0, abs=1e-9)


def test_bce_matches_extended_precision_loop():
    rng = np.random.default_rng(3)
    scores = rng.normal(scale=4.0, size=64)
    labels = rng.random(64)
    got = bce_loss(scores, labels)
    with mpmath.workdps(50):
        total = mpmath.mpf(0)
        for s, y in zip(scores, labels):
            sig = 1 / (1 + mpmath.e ** (-mpmath.mpf(s)))
            total += -(mpmath.mpf(y) * mpmath.log(sig) + (1 - mpmath.mpf(y)) * mpmath.log(1 - sig))
        expected = float(total / 64)
    assert abs(got - expected) < 1e-9


def test_bce_rejects_bad_labels():
    with pytest.raises(ValueError):
        bce_loss(np.array([0.0]), np.array([1.5]))
    with pytest.raises(ValueError):
        bce_loss(np.array([0.0]), np.array([-0.1]))


def test_bce_label_smoothing_midpoint():
    # smoothing pulls hard labels toward 1/2: at s=0 the loss is log 2 regardless
    assert bce_loss(np.array([0.0]), np.array([1.0]), label_smoothing=0.2) == pytest.approx(
        math.log(2)
    )


# --- LossSpec --------------------------------------------------------------


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec(kind="nope").validate()
    with pytest.raises(ValueError):
        LossSpec(kind="margin", margin=-1.0).validate()
    with pytest.raises(ValueError):
        LossSpec(kind="self_adversarial", adv_temperature=0.0).validate()
    with pytest.raises(ValueError):
        LossSpec(kind="bce", label_smoothing=1.0).validate()
    LossSpec(kind="bce", label_smoothing=0.3).validate()
