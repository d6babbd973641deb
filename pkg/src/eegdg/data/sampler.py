"""Per-domain minibatch sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import DomainKey
from .split import SplitPlan

DEFAULT_BATCH_PER_DOMAIN = 8


@dataclass(frozen=True)
class DomainBatch:
    """Training trials from one source domain."""

    domain: DomainKey
    inputs: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{self.domain}: {len(self.inputs)} inputs but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)


class _Stream:
    """Endless concatenation of fresh permutations of range(n)."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.buf = np.empty(0, dtype=np.int64)

    def take(self, k: int) -> np.ndarray:
        while len(self.buf) < k:
            self.buf = np.concatenate([self.buf, self.rng.permutation(self.n)])
        out, self.buf = self.buf[:k], self.buf[k:]
        return out


class MinibatchSampler:
    """One ``batch_size`` batch per source domain per call.

    Each domain walks through shuffled passes over its train trials, so every
    trial is drawn once before any repeats.
    """

    def __init__(self, plan: SplitPlan, rng: np.random.Generator, batch_size: int = DEFAULT_BATCH_PER_DOMAIN):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        for d in plan.sources:
            if len(plan.train_idx[d]) < batch_size:
                raise ValueError(f"domain {d} has {len(plan.train_idx[d])} train trials, fewer than {batch_size}")
        self.plan = plan
        self.batch_size = batch_size
        seeds = rng.integers(0, 2**63 - 1, size=len(plan.sources))
        self.streams = {d: _Stream(len(plan.train_idx[d]), np.random.default_rng(int(s)))
                        for d, s in zip(plan.sources, seeds)}

    def sample(self) -> list[DomainBatch]:
        out = []
        for d in self.plan.sources:
            pos = self.streams[d].take(self.batch_size)
            x, y = self.plan.train_data(d, pos)
            out.append(DomainBatch(d, x, y))
        return out

    __call__ = sample


def sample_minibatches(sampler: MinibatchSampler) -> list[DomainBatch]:
    return sampler.sample()
