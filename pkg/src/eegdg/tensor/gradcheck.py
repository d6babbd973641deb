"""Central finite-difference check of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numeric_grad(f: Callable[[], Tensor], x: Tensor, index: int, eps: float) -> float:
    pos = np.unravel_index(index, x.shape)
    orig = x.data[pos]
    x.data[pos] = orig + eps
    hi = float(f().data)
    x.data[pos] = orig - eps
    lo = float(f().data)
    x.data[pos] = orig
    return (hi - lo) / (2 * eps)


def grad_check(
    f: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    max_checks: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> float:
    """Largest relative error between backward() and central differences.

    ``f`` is a zero-argument closure over ``inputs`` returning a scalar
    Tensor.  Each entry of each input is perturbed in place, or a random subset
    of ``max_checks`` entries per input when given.  The relative error of one
    entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    for x in inputs:
        if x.dtype != np.float64:
            raise ValueError(f"grad_check needs float64 inputs, got {x.dtype} for {x.name or x.shape}")
    saved = [x.requires_grad for x in inputs]
    for x in inputs:
        x.requires_grad = True
    try:
        with Tape() as tape:
            loss = f()
            if loss.size != 1:
                raise ValueError(f"grad_check needs a scalar function, got shape {loss.shape}")
            tape.backward(loss, inputs)
        analytic = [x.grad.reshape(-1).copy() for x in inputs]
    finally:
        for x, s in zip(inputs, saved):
            x.requires_grad = s

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for x, a in zip(inputs, analytic):
        n = x.size
        idx = np.arange(n) if max_checks is None or max_checks >= n else rng.choice(n, max_checks, replace=False)
        for i in idx:
            num = numeric_grad(f, x, int(i), eps)
            denom = max(abs(a[i]), abs(num), floor)
            worst = max(worst, abs(a[i] - num) / denom)
    return worst
