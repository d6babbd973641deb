"""Domain identities and in-memory session containers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CHANNELS = 60
N_SAMPLES = 1000
N_CLASSES = 3
TRIALS_PER_CLASS = 50
DEFAULT_CLASS_NAMES = ("class0", "class1", "class2")


@dataclass(frozen=True, order=True)
class DomainKey:
    subject: int
    session: int

    def __post_init__(self):
        if self.subject < 1:
            raise ValueError(f"subjects are numbered from 1, got {self.subject}")
        if self.session not in (1, 2):
            raise ValueError(f"session must be 1 or 2, got {self.session}")

    @property
    def stem(self) -> str:
        return f"s{self.subject:02d}_sess{self.session}"

    def __str__(self) -> str:
        return f"({self.subject},{self.session})"


@dataclass(frozen=True)
class Trial:
    signal: np.ndarray
    label: int

    def __post_init__(self):
        if self.signal.shape != (N_CHANNELS, N_SAMPLES):
            raise ValueError(f"trial signal must be ({N_CHANNELS}, {N_SAMPLES}), got {self.signal.shape}")
        if not 0 <= self.label < N_CLASSES:
            raise ValueError(f"label must be in [0, {N_CLASSES}), got {self.label}")


@dataclass
class SessionRecord:
    """All trials of one (subject, session), stored as stacked arrays."""

    domain: DomainKey
    signals: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.signals.ndim != 3 or self.signals.shape[1:] != (N_CHANNELS, N_SAMPLES):
            raise ValueError(f"{self.domain}: signals must be (n, {N_CHANNELS}, {N_SAMPLES}), got {self.signals.shape}")
        if len(self.labels) != len(self.signals):
            raise ValueError(f"{self.domain}: {len(self.signals)} signals but {len(self.labels)} labels")
        if len(self.labels) and int(self.labels.max()) >= N_CLASSES:
            raise ValueError(f"{self.domain}: label {int(self.labels.max())} out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def trials(self) -> list[Trial]:
        return [Trial(self.signals[i], int(self.labels[i])) for i in range(len(self))]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)


@dataclass
class Dataset:
    records: list[SessionRecord]
    manifest: dict = field(default_factory=dict)
    path: str | None = None

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.domain)
        self._index = {r.domain: r for r in self.records}
        if len(self._index) != len(self.records):
            raise ValueError("duplicate domain in dataset")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, key: DomainKey) -> SessionRecord:
        return self._index[key]

    def __contains__(self, key: DomainKey) -> bool:
        return key in self._index

    @property
    def domains(self) -> list[DomainKey]:
        return [r.domain for r in self.records]

    @property
    def subjects(self) -> list[int]:
        return sorted({d.subject for d in self.domains})

    @property
    def n_trials(self) -> int:
        return sum(len(r) for r in self.records)
