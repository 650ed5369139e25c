import math

import numpy as np
import pytest

from autodiff.tensor import Tensor
from domain.boxes import EgoStep
from domain.errors import ArgumentError, DimensionError, NumericError
from model.head import HeadOutput, HeadTargets
from model.params import N_REGRESSION
from training.losses import (
    LossBreakdown,
    confidence_loss,
    detection_loss,
    focal_loss,
    slot_shifts,
    temporal_loss,
    total_loss,
)
from utils.config import DEFAULT_LAMBDAS


def test_focal_loss_hand_values():
    ln2 = math.log(2.0)
    assert focal_loss(np.zeros(1), np.ones(1)).item() == pytest.approx(0.25 * 0.25 * ln2)
    assert focal_loss(np.zeros(1), np.zeros(1)).item() == pytest.approx(0.75 * 0.25 * ln2)
    with pytest.raises(DimensionError):
        focal_loss(np.zeros(2), np.zeros(3))


def test_detection_loss_normalizes_by_positives():
    heat = np.zeros((1, 2, 2))
    targets = HeadTargets(heat.copy(), np.zeros((N_REGRESSION, 2, 2)), np.zeros((2, 2), dtype=bool))
    output = HeadOutput(Tensor(heat), Tensor(np.zeros((N_REGRESSION, 2, 2))))
    empty = detection_loss(output, targets).item()
    assert empty == pytest.approx(4 * 0.75 * 0.25 * math.log(2.0))

    targets.heatmap[0, 1, 1] = 1.0
    targets.mask[1, 1] = True
    targets.mask[0, 0] = True
    targets.regression[:, 0, 0] = 1.0
    two = detection_loss(output, targets).item()
    focal = focal_loss(heat, targets.heatmap).item()
    assert two == pytest.approx((focal + N_REGRESSION) / 2.0)


def test_total_loss_with_unit_components():
    breakdown = total_loss(1.0, 1.0, 1.0, 1.0)
    assert breakdown.l_total == pytest.approx(1.35)
    assert breakdown.total.item() == pytest.approx(1.35)
    assert breakdown.lambdas == DEFAULT_LAMBDAS


def test_total_loss_rejects_non_finite_components():
    with pytest.raises(NumericError):
        total_loss(1.0, float("inf"))


def test_breakdown_verify_catches_mismatch():
    bad = LossBreakdown(1.0, 1.0, 1.0, 1.0, 2.0)
    with pytest.raises(NumericError):
        bad.verify()
    mean = LossBreakdown.mean([total_loss(1.0), total_loss(3.0)])
    assert mean.l_det == 2.0 and mean.l_total == pytest.approx(2.0)


def test_confidence_loss_is_binary_cross_entropy():
    assert confidence_loss([0.5], [1.0]).item() == pytest.approx(math.log(2.0))
    expected = -0.5 * (math.log(0.9) + math.log(1.0 - 0.2))
    assert confidence_loss([0.9, 0.2], [1.0, 0.0]).item() == pytest.approx(expected)
    with pytest.raises(ArgumentError):
        confidence_loss([0.5], [1.0, 0.0])
    with pytest.raises(ArgumentError):
        confidence_loss([0.5], [1.5])


def test_temporal_loss_single_frame_is_zero():
    assert temporal_loss([np.ones((6, 4))]).item() == 0.0


def test_temporal_loss_is_mean_squared_difference():
    a = np.zeros((6, 4))
    b = np.full((6, 4), 2.0)
    c = np.full((6, 4), 3.0)
    assert temporal_loss([a, b, c]).item() == pytest.approx((4.0 + 1.0) / 2.0)


def test_temporal_loss_aligns_slots_after_ego_rotation():
    prev = np.random.default_rng(0).normal(size=(6, 4))
    cur = np.roll(prev, -1, axis=0)
    step = EgoStep(dyaw=math.pi / 3)
    assert temporal_loss([prev, cur], [step]).item() == pytest.approx(0.0, abs=1e-15)
    assert temporal_loss([prev, cur]).item() > 0.0
    with pytest.raises(ArgumentError):
        temporal_loss([prev, cur], [step, step])


def test_slot_shifts_follow_accumulated_yaw():
    assert slot_shifts([EgoStep(dyaw=math.pi / 3)] * 2) == [1, 1]
    assert slot_shifts([EgoStep(dyaw=0.6), EgoStep(dyaw=0.6)]) == [1, 0]
    assert slot_shifts([EgoStep(dyaw=0.1)] * 3) == [0, 0, 0]
