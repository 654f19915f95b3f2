"""Adam optimizer and the warm-restart cosine learning-rate curve."""

from __future__ import annotations

import math

import numpy as np

from facediff.tensor import Tensor


class Adam:
    """Adam with bias correction; moment buffers are keyed by parameter name.

    Frozen parameters are simply never passed to step(), so their values and
    moments stay untouched byte for byte.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, named_params: list[tuple[str, Tensor]], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for name, p in named_params:
            g = p.grad
            if g is None:
                continue
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m[:] = self.beta1 * m + (1.0 - self.beta1) * g
            v[:] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p.data -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def cosine_restart_value(t_cur: float, period: float, lr: float, lr_min: float = 0.0) -> float:
    """Closed-form annealed rate at offset t_cur within one restart period."""
    if period <= 0:
        raise ValueError(f"restart period must be positive, got {period}")
    return lr_min + 0.5 * (lr - lr_min) * (1.0 + math.cos(math.pi * t_cur / period))


def lr_at_step(step: int, lr: float, lr_min: float, restart_period: int,
               warmup_steps: int = 0) -> float:
    """Stepwise schedule: linear warmup, then the cosine curve restarting
    every restart_period steps (the period endpoint wraps to a fresh restart)."""
    if step < warmup_steps:
        return lr * (step + 1) / warmup_steps
    t_cur = (step - warmup_steps) % restart_period
    return cosine_restart_value(t_cur, restart_period, lr, lr_min)
