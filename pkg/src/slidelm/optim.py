"""AdamW with per-group hyperparameters, warmup-then-constant schedule,
and the finite-difference gradient checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class GroupConfig:
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8


class AdamW:
    """Decoupled-weight-decay Adam over named parameters.

    ``group_fn`` maps a parameter name to its GroupConfig; the learning
    rate ramps linearly over ``warmup_steps`` and is then held constant.
    """

    def __init__(self, params: dict[str, Tensor],
                 group_fn: Callable[[str], GroupConfig],
                 warmup_steps: int = 0):
        if warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        self.params = dict(params)
        self.groups = {name: group_fn(name) for name in self.params}
        self.warmup_steps = warmup_steps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def lr_scale(self) -> float:
        if self.warmup_steps == 0:
            return 1.0
        return min(1.0, self.t / self.warmup_steps)

    def step(self) -> float:
        self.t += 1
        scale = self.lr_scale()
        for name, p in self.params.items():
            g = self.groups[name]
            lr = g.lr * scale
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= g.beta1
            m += (1.0 - g.beta1) * grad
            v *= g.beta2
            v += (1.0 - g.beta2) * grad * grad
            m_hat = m / (1.0 - g.beta1 ** self.t)
            v_hat = v / (1.0 - g.beta2 ** self.t)
            p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + g.eps)
                                    + g.weight_decay * p.data)
        return scale

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def grad_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
               step: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central finite
    differences, per coordinate; denominator max(1, |analytic|, |fd|)."""
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for n, p in params.items()}
    worst = 0.0
    with ad.no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            ga = analytic[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                f_plus = float(loss_fn().data)
                flat[i] = orig - step
                f_minus = float(loss_fn().data)
                flat[i] = orig
                fd = (f_plus - f_minus) / (2.0 * step)
                err = abs(fd - ga[i]) / max(1.0, abs(fd), abs(ga[i]))
                worst = max(worst, err)
    return worst
