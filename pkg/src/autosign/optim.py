"""AdamW with decoupled weight decay and the cosine warm-restart schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamWState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], 0)


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamWState,
               lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """One in-place bias-corrected AdamW update.

    ``w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * w``.
    A missing gradient (None) is treated as zero.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state must have equal length")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    step_size = lr / bc1
    root_bc2 = math.sqrt(bc2)
    decay = 1.0 - lr * weight_decay
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p.data)
        # in-place arithmetic; same update as the docstring, rearranged
        tmp = np.multiply(g, 1.0 - beta1)
        m *= beta1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - beta2
        v *= beta2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp /= root_bc2
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        if weight_decay:
            p.data *= decay
        p.data -= tmp


class AdamW:
    """Thin stateful wrapper: holds the parameter list and hyperparameters."""

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-3):
        self.params = list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState.for_params(self.params)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr: float | None = None) -> None:
        adamw_step(self.params, [p.grad for p in self.params], self.state,
                   self.lr if lr is None else lr, self.betas[0], self.betas[1],
                   self.eps, self.weight_decay)


def cosine_warm_restart_lr(epoch: int, lr_max: float, lr_min: float = 0.0,
                           T0: int = 10, Tmult: int = 1) -> float:
    """Learning rate for ``epoch`` (0-based) under cosine annealing with warm restarts.

    Cycle i lasts ``T0 * Tmult**i`` epochs; the first epoch of every cycle
    returns exactly ``lr_max``.
    """
    if T0 < 1 or Tmult < 1:
        raise ValueError("T0 and Tmult must be >= 1")
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    if Tmult == 1:
        e_cyc, T_cyc = epoch % T0, T0
    else:
        e_cyc, T_cyc = epoch, T0
        while e_cyc >= T_cyc:
            e_cyc -= T_cyc
            T_cyc *= Tmult
    if e_cyc == 0:
        return lr_max
    return lr_min + (lr_max - lr_min) * (1.0 + math.cos(math.pi * e_cyc / T_cyc)) / 2.0
