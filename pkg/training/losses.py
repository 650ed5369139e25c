# training/losses.py
"""Loss terms and their weighted combination.

total = l1 * det + l2 * contrast + l3 * temp + l4 * conf, with the default
weights (1.0, 0.1, 0.2, 0.05).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, as_tensor
from domain.boxes import EgoStep
from domain.errors import ArgumentError, DimensionError, NumericError
from domain.view_geometry import SECTOR
from model.head import HeadOutput, HeadTargets
from utils.config import DEFAULT_LAMBDAS

Lambdas = Tuple[float, float, float, float]

ZERO = Tensor(np.array(0.0))


def focal_loss(logits, targets: np.ndarray, alpha: float = 0.25, gamma: float = 2.0) -> Tensor:
    """Summed binary focal loss; `targets` are 0/1 with the shape of `logits`."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != logits.shape:
        raise DimensionError("focal_loss", logits.shape, targets.shape)
    p = ops.sigmoid(logits)
    pos = ops.mul(ops.power(ops.sub(1.0, p), gamma), ops.log_sigmoid(logits))
    neg = ops.mul(ops.power(p, gamma), ops.log_sigmoid(ops.neg(logits)))
    per_cell = ops.add(ops.mul(pos, alpha * targets), ops.mul(neg, (1.0 - alpha) * (1.0 - targets)))
    return ops.neg(ops.sum(per_cell))


def regression_l1(regression, targets: HeadTargets) -> Tensor:
    """Summed L1 over the nine regression channels at positive cells."""
    if targets.n_pos == 0:
        return ZERO
    rows, cols = np.nonzero(targets.mask)
    picked = ops.take(as_tensor(regression), (slice(None), rows, cols))
    return ops.sum(ops.absolute(ops.sub(picked, targets.regression[:, rows, cols])))


def detection_loss(
    output: HeadOutput, targets: HeadTargets, alpha: float = 0.25, gamma: float = 2.0
) -> Tensor:
    """(focal + L1) / max(1, positives)."""
    if output.heatmap.shape != targets.heatmap.shape:
        raise DimensionError("detection_loss", output.heatmap.shape, targets.heatmap.shape)
    norm = 1.0 / max(1, targets.n_pos)
    total = ops.add(
        focal_loss(output.heatmap, targets.heatmap, alpha, gamma),
        regression_l1(output.regression, targets),
    )
    return ops.mul(total, norm)


def slot_shifts(ego_motion: Sequence[EgoStep]) -> list:
    """Whole-sector view-slot shift between consecutive frames from the accumulated ego yaw."""
    shifts, yaw, prev = [], 0.0, 0
    for step in ego_motion:
        yaw += step.dyaw
        current = int(round(yaw / SECTOR))
        shifts.append(current - prev)
        prev = current
    return shifts


def temporal_loss(spatial: Sequence[Tensor], ego_motion: Sequence[EgoStep] = ()) -> Tensor:
    """Mean over consecutive pairs of MSE(S^t, aligned S^{t-1}); zero for a single frame.

    The ego yawing by one sector moves what view slot k saw into slot k - 1,
    so the previous step is rolled before the comparison.
    """
    steps = len(spatial)
    if steps < 2:
        return ZERO
    ego_motion = list(ego_motion) or [EgoStep() for _ in range(steps - 1)]
    if len(ego_motion) != steps - 1:
        raise ArgumentError(f"temporal_loss: {len(ego_motion)} ego steps for {steps} frames")
    terms = []
    for t, shift in enumerate(slot_shifts(ego_motion), start=1):
        prev, cur = as_tensor(spatial[t - 1]), as_tensor(spatial[t])
        if shift % prev.shape[0]:
            prev = ops.take(prev, (np.arange(prev.shape[0]) + shift) % prev.shape[0])
        diff = ops.sub(cur, prev)
        terms.append(ops.mean(ops.mul(diff, diff)))
    return ops.mean(ops.stack(terms))


def confidence_loss(scores: Sequence, targets: Sequence[float]) -> Tensor:
    """Mean binary cross-entropy of confidence scores against targets in [0, 1]."""
    if len(scores) != len(targets) or not len(scores):
        raise ArgumentError(f"confidence_loss: {len(scores)} scores for {len(targets)} targets")
    y = np.asarray(targets, dtype=np.float64)
    if np.any((y < 0.0) | (y > 1.0)):
        raise ArgumentError("confidence_loss: targets must lie in [0, 1]")
    s = ops.stack([ops.reshape(as_tensor(c), ()) for c in scores])
    log_hit = ops.mul(ops.log(s), y)
    log_miss = ops.mul(ops.log(ops.sub(1.0, s)), 1.0 - y)
    return ops.neg(ops.mean(ops.add(log_hit, log_miss)))


@dataclass
class LossBreakdown:
    l_det: float
    l_contrast: float
    l_temp: float
    l_conf: float
    l_total: float
    lambdas: Lambdas = DEFAULT_LAMBDAS
    total: Optional[Tensor] = field(default=None, repr=False, compare=False)

    @property
    def components(self) -> Tuple[float, float, float, float]:
        return (self.l_det, self.l_contrast, self.l_temp, self.l_conf)

    def verify(self) -> None:
        """Recompute the weighted sum; raises NumericError when it does not match."""
        expected = weighted_sum(self.components, self.lambdas)
        if not math.isclose(self.l_total, expected, rel_tol=1e-12, abs_tol=1e-15):
            raise NumericError(f"loss breakdown: total {self.l_total} != weighted sum {expected}")
        if self.total is not None and not math.isclose(
            self.total.item(), expected, rel_tol=1e-12, abs_tol=1e-15
        ):
            raise NumericError(f"loss breakdown: graph total {self.total.item()} != {expected}")

    def as_dict(self) -> dict:
        return {
            "l_det": self.l_det,
            "l_contrast": self.l_contrast,
            "l_temp": self.l_temp,
            "l_conf": self.l_conf,
            "l_total": self.l_total,
        }

    @classmethod
    def mean(cls, parts: Sequence["LossBreakdown"]) -> "LossBreakdown":
        if not parts:
            raise ArgumentError("LossBreakdown.mean: no parts")
        lambdas = parts[0].lambdas
        comps = [float(np.mean([p.components[i] for p in parts])) for i in range(4)]
        return cls(*comps, weighted_sum(comps, lambdas), lambdas)


def weighted_sum(components: Sequence[float], lambdas: Lambdas) -> float:
    total = 0.0
    for lam, value in zip(lambdas, components):
        total = total + lam * value
    return total


def total_loss(
    l_det=0.0,
    l_contrast=0.0,
    l_temp=0.0,
    l_conf=0.0,
    lambdas: Lambdas = DEFAULT_LAMBDAS,
) -> LossBreakdown:
    """Weighted sum of the four components; the graph total is kept for backward."""
    parts = [as_tensor(c) for c in (l_det, l_contrast, l_temp, l_conf)]
    values = []
    for name, part in zip(("det", "contrast", "temp", "conf"), parts):
        value = part.item()
        if not math.isfinite(value):
            raise NumericError(f"total_loss: {name} component is not finite")
        values.append(value)
    total = ZERO
    for lam, part in zip(lambdas, parts):
        if lam != 0.0:
            total = ops.add(total, ops.mul(part, lam))
    breakdown = LossBreakdown(*values, weighted_sum(values, lambdas), tuple(lambdas), total)
    breakdown.verify()
    return breakdown
