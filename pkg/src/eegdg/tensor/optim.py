"""Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[Tensor], **kw) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], **kw)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState, lr: float) -> Sequence[Tensor]:
    """Apply one bias-corrected Adam update to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    for i, (p, g) in enumerate(zip(params, grads)):
        if state.m[i].shape != p.shape:
            raise ValueError(f"Adam state shape {state.m[i].shape} does not match parameter {p.name or i} {p.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name or i}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p.data -= update.astype(p.dtype, copy=False)
    return params


class Adam:
    """Adam over a fixed parameter list, reading gradients from ``p.grad``."""

    def __init__(self, params: Sequence[Tensor], lr: float = 5e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.zeros_like(self.params, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.params, grads, self.state, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
