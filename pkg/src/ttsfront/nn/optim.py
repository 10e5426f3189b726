"""Adam and the inverse-time decaying learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .core import Param


@dataclass(frozen=True)
class LrSchedule:
    lr0: float = 2e-4
    decay: float = 1e-5

    def __call__(self, step: int) -> float:
        return lr_at(self, step)


def lr_at(schedule: LrSchedule, step: int) -> float:
    """``lr0 / (1 + decay * step)``.

    A linear reading (``lr0 - decay * step``) would reach zero after 20k steps,
    which cannot be what a 1M-step run used.
    """
    if step < 0:
        raise ValueError("step must be nonnegative")
    return schedule.lr0 / (1.0 + schedule.decay * step)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Param], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update of every parameter from its ``grad``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, p in params.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * p.grad
        v *= b2
        v += (1.0 - b2) * p.grad * p.grad
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.data.dtype)


class Adam:
    def __init__(self, params: Dict[str, Param], **kwargs):
        self.params = params
        self.state = AdamState(**kwargs)

    def step(self, lr: float) -> None:
        adam_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
