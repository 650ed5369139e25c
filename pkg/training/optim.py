# training/optim.py
"""First-order optimizers over name-addressed parameter arrays."""

from __future__ import annotations

import logging
from typing import Dict

import numpy as np

from domain.errors import ConfigurationError, DimensionError
from model.params import ModelParams
from utils.config import TrainConfig

logger = logging.getLogger(__name__)


class Optimizer:
    """Applies `step(params, grads)`; parameters without a gradient stay untouched."""

    def __init__(self, learning_rate: float, weight_decay: float = 0.0):
        if learning_rate <= 0:
            raise ConfigurationError(f"learning rate must be positive, got {learning_rate}")
        if weight_decay < 0:
            raise ConfigurationError(f"weight decay must be >= 0, got {weight_decay}")
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.steps = 0

    def update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def step(self, params: ModelParams, grads: Dict[str, np.ndarray]) -> ModelParams:
        self.steps += 1

        def apply(name, value):
            value = np.array(value, dtype=np.float64)
            grad = grads.get(name)
            if grad is None:
                return value
            if grad.shape != value.shape:
                raise DimensionError(f"optimizer step {name}", value.shape, grad.shape)
            return self.update(name, value, grad)

        return params.map(apply)


class SGD(Optimizer):
    def update(self, name, value, grad):
        return value - self.learning_rate * (grad + self.weight_decay * value)


class AdamW(Optimizer):
    """Adaptive moments with weight decay applied to the weights, not the gradient."""

    def __init__(
        self,
        learning_rate: float,
        weight_decay: float = 0.0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(learning_rate, weight_decay)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def update(self, name, value, grad):
        m = self.beta1 * self.m.get(name, 0.0) + (1.0 - self.beta1) * grad
        v = self.beta2 * self.v.get(name, 0.0) + (1.0 - self.beta2) * grad * grad
        self.m[name], self.v[name] = m, v
        m_hat = m / (1.0 - self.beta1**self.steps)
        v_hat = v / (1.0 - self.beta2**self.steps)
        decayed = value * (1.0 - self.learning_rate * self.weight_decay)
        return decayed - self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(train: TrainConfig) -> Optimizer:
    if train.optimizer == "adamw":
        return AdamW(train.learning_rate, train.weight_decay)
    if train.optimizer == "sgd":
        return SGD(train.learning_rate, train.weight_decay)
    raise ConfigurationError(f"unknown optimizer {train.optimizer!r}")
