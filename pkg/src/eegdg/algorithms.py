"""Domain-generalization training steps: ERM, DANN, GroupDRO and inter-domain Mixup.

Every step takes one ``DomainBatch`` per source domain, runs a single forward
pass over the pooled batch, and applies one optimizer update.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import N_CLASSES, DomainBatch, DomainKey
from .models import Network
from .models import layers as L
from .tensor import Adam, Tape, Tensor, ops

ALGORITHM_NAMES = ("ERM", "DANN", "GroupDRO", "Mixup")
DISCRIMINATOR_HIDDEN = 256


@dataclass(frozen=True)
class AlgoHyperParams:
    lr: float = 5e-4
    lambda_dann: float = 1.0
    eta_dro: float = 0.01
    alpha_mixup: float = 0.2
    batch_per_domain: int = 8

    def __post_init__(self):
        for name in ("lr", "lambda_dann", "eta_dro", "alpha_mixup", "batch_per_domain"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    def to_dict(self) -> dict:
        return {"lr": self.lr, "lambda_dann": self.lambda_dann, "eta_dro": self.eta_dro,
                "alpha_mixup": self.alpha_mixup, "batch_per_domain": self.batch_per_domain}


@dataclass
class StepStats:
    loss: float
    domain_losses: dict[DomainKey, float]
    extra: dict[str, float] = field(default_factory=dict)


@dataclass
class GroupWeights:
    """A probability vector over source domains."""

    domains: list[DomainKey]
    q: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        if self.q.shape != (len(self.domains),):
            raise ValueError(f"{len(self.domains)} domains but q has shape {self.q.shape}")
        if not (self.q > 0).all() or abs(self.q.sum() - 1.0) > 1e-6:
            raise ValueError(f"group weights must be positive and sum to 1, got {self.q}")

    @classmethod
    def uniform(cls, domains: Sequence[DomainKey]) -> "GroupWeights":
        return cls(list(domains), np.full(len(domains), 1.0 / len(domains)))

    def updated(self, losses: np.ndarray, eta: float) -> "GroupWeights":
        """Exponentiated-gradient ascent on the group losses, then renormalise."""
        if eta < 0:
            raise ValueError(f"eta must be >= 0, got {eta}")
        logq = np.log(self.q) + eta * np.asarray(losses, dtype=np.float64)
        q = np.exp(logq - logq.max())
        return GroupWeights(self.domains, q / q.sum())


@dataclass
class MixedBatch:
    inputs: np.ndarray
    soft_targets: np.ndarray
    lambdas: np.ndarray

    def __post_init__(self):
        if not ((self.lambdas >= 0) & (self.lambdas <= 1)).all():
            raise ValueError("mixing coefficients must lie in [0, 1]")
        if np.abs(self.soft_targets.sum(axis=1) - 1).max(initial=0) > 1e-6:
            raise ValueError("soft targets must sum to 1")


# -- helpers -----------------------------------------------------------------

def _check_batches(batches: Sequence[DomainBatch]) -> None:
    if not batches:
        raise ValueError("need at least one domain batch")
    for b in batches:
        if not isinstance(b, DomainBatch) or b.split != "train":
            raise ValueError("step functions accept only source-domain training batches")


def _pool(batches: Sequence[DomainBatch]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = np.concatenate([b.inputs for b in batches])
    y = np.concatenate([b.labels for b in batches]).astype(np.int64)
    group = np.concatenate([np.full(len(b), i) for i, b in enumerate(batches)])
    return x, y, group


def _group_means(values: np.ndarray, group: np.ndarray, n_groups: int) -> np.ndarray:
    return np.bincount(group, weights=values, minlength=n_groups) / np.bincount(group, minlength=n_groups)


def _per_domain(batches, ce: np.ndarray, group: np.ndarray) -> tuple[np.ndarray, dict[DomainKey, float]]:
    means = _group_means(ce, group, len(batches))
    return means, {b.domain: float(m) for b, m in zip(batches, means)}


def _onehot(y: np.ndarray, dtype=np.float32) -> np.ndarray:
    out = np.zeros((len(y), N_CLASSES), dtype=dtype)
    out[np.arange(len(y)), y] = 1
    return out


def _apply(opt: Adam, loss: Tensor, tape: Tape) -> None:
    tape.backward(loss, opt.params)
    opt.step()


# -- ERM ---------------------------------------------------------------------

def erm_step(model: Network, batches: Sequence[DomainBatch], opt: Adam) -> StepStats:
    """Mean cross-entropy over the concatenation of all domain batches."""
    _check_batches(batches)
    x, y, group = _pool(batches)
    with Tape() as tape:
        logits = model(Tensor(x))
        loss = ops.softmax_cross_entropy(logits, y)
        _apply(opt, loss, tape)
    _, per = _per_domain(batches, ops.cross_entropy_per_sample(logits.data, y), group)
    return StepStats(float(loss.data), per)


# -- DANN --------------------------------------------------------------------

class Discriminator(L.Module):
    """Two-layer ELU MLP predicting the source domain of a feature vector."""

    def __init__(self, feature_dim: int, domains: Sequence[DomainKey], hidden: int = DISCRIMINATOR_HIDDEN,
                 seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng((seed, 7))
        self.domains = list(domains)
        self.index = {d: i for i, d in enumerate(self.domains)}
        self.hidden = L.Linear(feature_dim, hidden, rng=rng, dtype=dtype)
        self.act = L.ELU()
        self.out = L.Linear(hidden, len(self.domains), rng=rng, dtype=dtype)
        for name, p in self.named_parameters("discriminator."):
            p.name = name

    def forward(self, x):
        return self.out(self.act(self.hidden(x)))


def dann_step(model: Network, discriminator: Discriminator, batches: Sequence[DomainBatch], opt: Adam,
              lam: float) -> StepStats:
    """Task loss plus domain loss seen through a gradient-reversal layer.

    ``opt`` must cover both the network and the discriminator.  The
    discriminator descends the domain loss; the feature extractor receives the
    task gradient plus ``-lam`` times the domain gradient.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    _check_batches(batches)
    missing = [b.domain for b in batches if b.domain not in discriminator.index]
    if missing:
        raise ValueError(f"discriminator has no output for domains {missing}")
    x, y, group = _pool(batches)
    dom = np.array([discriminator.index[batches[g].domain] for g in group], dtype=np.int64)
    with Tape() as tape:
        feats = model.extract(Tensor(x))
        logits = model.classify(feats)
        task = ops.softmax_cross_entropy(logits, y)
        dlogits = discriminator(ops.grad_reverse(feats, lam))
        domain = ops.softmax_cross_entropy(dlogits, dom)
        _apply(opt, ops.add(task, domain), tape)
    _, per = _per_domain(batches, ops.cross_entropy_per_sample(logits.data, y), group)
    acc = float((dlogits.data.argmax(axis=1) == dom).mean())
    return StepStats(float(task.data), per, {"domain_loss": float(domain.data), "domain_acc": acc})


# -- GroupDRO ----------------------------------------------------------------

def groupdro_step(model: Network, batches: Sequence[DomainBatch], opt: Adam, q: GroupWeights,
                  eta: float) -> tuple[StepStats, GroupWeights]:
    """Reweight domains by exp(eta * loss), then descend the q-weighted loss."""
    _check_batches(batches)
    by_domain = {b.domain: b for b in batches}
    if len(by_domain) != len(batches):
        raise ValueError("duplicate domain among batches")
    missing = [d for d in q.domains if d not in by_domain]
    extra = [d for d in by_domain if d not in set(q.domains)]
    if missing or extra:
        raise ValueError(f"group weights and batches disagree: missing {missing}, unexpected {extra}")
    ordered = [by_domain[d] for d in q.domains]
    x, y, group = _pool(ordered)
    counts = np.bincount(group, minlength=len(ordered))
    with Tape() as tape:
        logits = model(Tensor(x))
        ce = ops.cross_entropy_per_sample(logits.data, y)
        means, per = _per_domain(ordered, ce, group)
        q_new = q.updated(means, eta)
        w = (q_new.q / counts)[group]
        loss = ops.softmax_cross_entropy(logits, y, weights=w)
        _apply(opt, loss, tape)
    return StepStats(float(loss.data), per, {"max_q": float(q_new.q.max())}), q_new


# -- Mixup -------------------------------------------------------------------

def mixup_batch(batch_i: DomainBatch, batch_j: DomainBatch, alpha: float, rng: np.random.Generator,
                lam: float | np.ndarray | None = None, allow_same_domain: bool = False) -> MixedBatch:
    """Interpolate two domain batches sample by sample with lambda ~ Beta(alpha, alpha).

    ``lam`` overrides the draw (a scalar or one value per sample).
    """
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if batch_i.domain == batch_j.domain and not allow_same_domain:
        raise ValueError(f"cannot mix domain {batch_i.domain} with itself")
    if len(batch_i) != len(batch_j):
        raise ValueError(f"batch sizes differ: {len(batch_i)} vs {len(batch_j)}")
    n = len(batch_i)
    lams = rng.beta(alpha, alpha, size=n) if lam is None else np.broadcast_to(np.asarray(lam, float), (n,)).copy()
    dtype = batch_i.inputs.dtype
    li = lams.astype(dtype).reshape((n,) + (1,) * (batch_i.inputs.ndim - 1))
    x = li * batch_i.inputs + (1 - li) * batch_j.inputs
    lt = lams[:, None].astype(np.float32)
    y = lt * _onehot(batch_i.labels) + (1 - lt) * _onehot(batch_j.labels)
    return MixedBatch(x, y, lams)


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """A uniformly random permutation with no fixed points."""
    if n < 2:
        raise ValueError(f"a derangement needs at least 2 elements, got {n}")
    while True:
        perm = rng.permutation(n)
        if not (perm == np.arange(n)).any():
            return perm


def mixup_step(model: Network, batches: Sequence[DomainBatch], opt: Adam, alpha: float, rng: np.random.Generator,
               lam: float | None = None, pairing: Sequence[int] | None = None) -> StepStats:
    """ERM on per-sample mixtures of each domain batch with a partner domain's batch.

    Partners come from a random derangement unless ``pairing`` is given;
    an explicit pairing may pair a domain with itself.
    """
    _check_batches(batches)
    if pairing is None:
        if len(batches) < 2:
            raise ValueError("mixup needs at least two source domains")
        pairing = derangement(len(batches), rng)
    mixed = [mixup_batch(batches[i], batches[int(j)], alpha, rng, lam=lam, allow_same_domain=True)
             for i, j in enumerate(pairing)]
    x = np.concatenate([m.inputs for m in mixed])
    y = np.concatenate([m.soft_targets for m in mixed])
    group = np.concatenate([np.full(len(b), i) for i, b in enumerate(batches)])
    with Tape() as tape:
        logits = model(Tensor(x))
        loss = ops.softmax_cross_entropy(logits, y)
        _apply(opt, loss, tape)
    _, per = _per_domain(batches, ops.cross_entropy_per_sample(logits.data, y), group)
    return StepStats(float(loss.data), per, {"mean_lambda": float(np.mean([m.lambdas.mean() for m in mixed]))})


# -- stateful wrappers used by the harness -----------------------------------

class Algorithm:
    name = "ERM"

    def __init__(self, model: Network, hp: AlgoHyperParams, domains: Sequence[DomainKey], seed: int = 0):
        self.model = model
        self.hp = hp
        self.domains = list(domains)
        self.opt = Adam(self.parameters(), lr=hp.lr)

    def parameters(self) -> list[Tensor]:
        return self.model.parameters()

    def step(self, batches: Sequence[DomainBatch]) -> StepStats:
        return erm_step(self.model, batches, self.opt)


class ERM(Algorithm):
    pass


class DANN(Algorithm):
    name = "DANN"

    def __init__(self, model, hp, domains, seed=0):
        self.discriminator = Discriminator(model.config.feature_dim, domains, seed=seed, dtype=model.dtype)
        super().__init__(model, hp, domains, seed)

    def parameters(self):
        return self.model.parameters() + self.discriminator.parameters()

    def step(self, batches):
        return dann_step(self.model, self.discriminator, batches, self.opt, self.hp.lambda_dann)


class GroupDRO(Algorithm):
    name = "GroupDRO"

    def __init__(self, model, hp, domains, seed=0):
        super().__init__(model, hp, domains, seed)
        self.q = GroupWeights.uniform(self.domains)

    def step(self, batches):
        stats, self.q = groupdro_step(self.model, batches, self.opt, self.q, self.hp.eta_dro)
        return stats


class Mixup(Algorithm):
    name = "Mixup"

    def __init__(self, model, hp, domains, seed=0):
        super().__init__(model, hp, domains, seed)
        self.rng = np.random.default_rng((seed, 11))

    def step(self, batches):
        return mixup_step(self.model, batches, self.opt, self.hp.alpha_mixup, self.rng)


ALGORITHMS: dict[str, type[Algorithm]] = {"ERM": ERM, "DANN": DANN, "GroupDRO": GroupDRO, "Mixup": Mixup}


def make_algorithm(name: str, model: Network, hp: AlgoHyperParams, domains: Sequence[DomainKey],
                   seed: int = 0) -> Algorithm:
    try:
        cls = ALGORITHMS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {list(ALGORITHMS)}") from None
    return cls(model, hp, domains, seed)


__all__ = [
    "ALGORITHMS", "ALGORITHM_NAMES", "AlgoHyperParams", "Algorithm", "DANN", "Discriminator", "ERM", "GroupDRO",
    "GroupWeights", "MixedBatch", "Mixup", "StepStats", "dann_step", "derangement", "erm_step",
    "groupdro_step", "make_algorithm", "mixup_batch", "mixup_step",
]
