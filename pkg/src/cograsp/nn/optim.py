"""AdamW with decoupled weight decay and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .layers import ParameterStore

__all__ = ["OptimizerConfig", "AdamW", "PlateauScheduler", "plateau_schedule"]


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 2.61e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    schedule_factor: float = 0.3741
    schedule_patience: int = 3

    def __post_init__(self):
        if not 0 < self.schedule_factor < 1:
            raise ValueError("schedule_factor must lie in (0, 1)")
        if self.schedule_patience < 1:
            raise ValueError("schedule_patience must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class AdamW:
    def __init__(self, store: ParameterStore, cfg: OptimizerConfig | None = None):
        self.store = store
        self.cfg = cfg or OptimizerConfig()
        self.lr = self.cfg.learning_rate
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in store}
        self.v = {k: np.zeros_like(p.data) for k, p in store}

    def step(self):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in self.store:
            # decoupled decay first, so a zero gradient shrinks |w| by exactly (1 - lr * wd)
            p.data = p.data * (1.0 - self.lr * c.weight_decay)
            g = p.grad
            if g is None:
                continue
            m = self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            v = self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + c.epsilon)


class PlateauScheduler:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without improvement."""

    def __init__(self, lr: float, factor: float = 0.3741, patience: int = 3):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.best = math.inf
        self.bad = 0

    def step(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.bad = 0
        else:
            self.bad += 1
            if self.bad >= self.patience:
                self.lr *= self.factor
                self.bad = 0
        return self.lr


def plateau_schedule(losses, lr: float, factor: float = 0.3741, patience: int = 3) -> float:
    """Learning rate after replaying ``losses`` through a fresh scheduler."""
    s = PlateauScheduler(lr, factor, patience)
    for x in losses:
        s.step(x)
    return s.lr
