"""Leave-one-session-out splits, fine-tuning splits and the access log."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domains import N_CLASSES, Dataset, DomainKey

TARGET_SESSION = 2
FINETUNE_SESSION = 1


class LeakageError(RuntimeError):
    pass


@dataclass
class AccessLog:
    """Ordered record of every data read made through a split: (role, domain, n_trials)."""

    events: list[tuple[str, DomainKey, int]] = field(default_factory=list)

    def record(self, role: str, domain: DomainKey, n: int) -> None:
        self.events.append((role, domain, int(n)))

    def domains_for(self, role: str) -> set[DomainKey]:
        return {d for r, d, _ in self.events if r == role}

    def count(self, role: str) -> int:
        return sum(1 for r, _, _ in self.events if r == role)

    def test_is_last(self) -> bool:
        """True when every test read comes after all train and validation reads."""
        roles = [r for r, _, _ in self.events]
        if "test" not in roles:
            return True
        first = roles.index("test")
        return all(r == "test" for r in roles[first:])


def _stratified(labels: np.ndarray, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    train, val = [], []
    for c in range(N_CLASSES):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_val = int(round(len(idx) * val_fraction))
        if n_val == 0 and len(idx) >= 2:
            n_val = 1  # keep every class represented in validation on tiny datasets
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


@dataclass
class SplitPlan:
    """Source train/val indices plus a held-out target domain.

    All reads go through the accessor methods so the access log sees them.
    """

    dataset: Dataset
    target: DomainKey
    sources: list[DomainKey]
    train_idx: dict[DomainKey, np.ndarray]
    val_idx: dict[DomainKey, np.ndarray]
    kind: str = "loso"
    seed: int = 0
    log: AccessLog = field(default_factory=AccessLog)

    def __post_init__(self):
        if self.target in self.sources:
            raise LeakageError(f"target {self.target} is listed as a source domain")
        if self.kind == "pool" and any(d.subject == self.target.subject for d in self.sources):
            raise LeakageError(f"pool split keeps subject {self.target.subject} in its sources")
        for d in self.sources:
            if np.intersect1d(self.train_idx[d], self.val_idx[d]).size:
                raise LeakageError(f"train and validation overlap in domain {d}")

    @property
    def source_subjects(self) -> list[int]:
        return sorted({d.subject for d in self.sources})

    @property
    def n_train(self) -> int:
        return sum(len(self.train_idx[d]) for d in self.sources)

    @property
    def n_val(self) -> int:
        return sum(len(self.val_idx[d]) for d in self.sources)

    @property
    def n_test(self) -> int:
        return len(self.dataset[self.target])

    def train_data(self, domain: DomainKey, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Trials at ``positions`` within the domain's train index list."""
        if domain not in self.train_idx:
            raise LeakageError(f"{domain} is not a source domain of this split")
        idx = self.train_idx[domain][positions]
        rec = self.dataset[domain]
        self.log.record("train", domain, len(idx))
        return np.asarray(rec.signals[idx]), rec.labels[idx].astype(np.int64)

    def val_data(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pooled source validation set: (signals, labels, domain index per trial)."""
        xs, ys, ds = [], [], []
        for i, d in enumerate(self.sources):
            idx = self.val_idx[d]
            rec = self.dataset[d]
            self.log.record("val", d, len(idx))
            xs.append(np.asarray(rec.signals[idx]))
            ys.append(rec.labels[idx].astype(np.int64))
            ds.append(np.full(len(idx), i))
        return np.concatenate(xs), np.concatenate(ys), np.concatenate(ds)

    def test_data(self) -> tuple[np.ndarray, np.ndarray]:
        rec = self.dataset[self.target]
        self.log.record("test", self.target, len(rec))
        return np.asarray(rec.signals), rec.labels.astype(np.int64)


def _require(dataset: Dataset, key: DomainKey) -> None:
    if key not in dataset:
        raise KeyError(f"dataset has no session {key}")


def _make_plan(dataset, target, sources, val_fraction, seed, kind) -> SplitPlan:
    if not 0 < val_fraction < 1:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    train, val = {}, {}
    for d in sources:
        rng = np.random.default_rng((seed, d.subject, d.session))
        train[d], val[d] = _stratified(dataset[d].labels, val_fraction, rng)
    return SplitPlan(dataset, target, list(sources), train, val, kind=kind, seed=seed)


def loso_split(dataset: Dataset, target_subject: int, val_fraction: float = 0.1, seed: int = 0) -> SplitPlan:
    """Hold out session 2 of ``target_subject``; every other session is a source, including
    the target subject's own session 1."""
    target = DomainKey(target_subject, TARGET_SESSION)
    _require(dataset, target)
    _require(dataset, DomainKey(target_subject, FINETUNE_SESSION))
    sources = [d for d in dataset.domains if d != target]
    return _make_plan(dataset, target, sources, val_fraction, seed, "loso")


def pool_split(dataset: Dataset, subject: int, val_fraction: float = 0.1, seed: int = 0) -> SplitPlan:
    """Source pool for the fine-tuning pipeline: every session of every other subject."""
    target = DomainKey(subject, TARGET_SESSION)
    _require(dataset, target)
    _require(dataset, DomainKey(subject, FINETUNE_SESSION))
    sources = [d for d in dataset.domains if d.subject != subject]
    return _make_plan(dataset, target, sources, val_fraction, seed, "pool")


@dataclass
class FinetuneSplit:
    dataset: Dataset
    subject: int
    log: AccessLog = field(default_factory=AccessLog)

    @property
    def train_domain(self) -> DomainKey:
        return DomainKey(self.subject, FINETUNE_SESSION)

    @property
    def test_domain(self) -> DomainKey:
        return DomainKey(self.subject, TARGET_SESSION)

    def train_data(self) -> tuple[np.ndarray, np.ndarray]:
        rec = self.dataset[self.train_domain]
        self.log.record("train", self.train_domain, len(rec))
        return np.asarray(rec.signals), rec.labels.astype(np.int64)

    def test_data(self) -> tuple[np.ndarray, np.ndarray]:
        rec = self.dataset[self.test_domain]
        self.log.record("test", self.test_domain, len(rec))
        return np.asarray(rec.signals), rec.labels.astype(np.int64)


def finetune_split(dataset: Dataset, subject: int) -> FinetuneSplit:
    """Session 1 of ``subject`` for training, session 2 for testing."""
    _require(dataset, DomainKey(subject, FINETUNE_SESSION))
    _require(dataset, DomainKey(subject, TARGET_SESSION))
    return FinetuneSplit(dataset, subject)
