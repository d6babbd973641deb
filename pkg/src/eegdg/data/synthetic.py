"""Synthetic multi-domain EEG-like data with controllable session shift.

Each class drives one latent source, a band-limited alpha-range oscillation.
A domain projects the active source onto the 60 electrodes through its own
mixing matrix (a shared base matrix plus a shift-scaled perturbation), scales
the amplitude, and adds white Gaussian noise.  Everything is seeded per
domain, so a subset of subjects reproduces the same trials as the full set.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .domains import N_CHANNELS, N_CLASSES, N_SAMPLES, TRIALS_PER_CLASS, Dataset, DomainKey, SessionRecord
from .io import build_manifest, write_dataset


@dataclass(frozen=True)
class GeneratorConfig:
    subjects: int = 15
    sessions: int = 2
    trials_per_class: int = TRIALS_PER_CLASS
    shift_strength: float = 0.1
    noise_level: float = 0.5
    seed: int = 0
    sample_rate: float = 250.0
    band: tuple[float, float] = (8.0, 12.0)

    def validate(self) -> None:
        if self.subjects < 1 or self.sessions not in (1, 2):
            raise ValueError(f"need subjects >= 1 and 1 or 2 sessions, got {self.subjects} and {self.sessions}")
        if self.trials_per_class < 1:
            raise ValueError(f"trials_per_class must be >= 1, got {self.trials_per_class}")
        if self.shift_strength < 0 or self.noise_level < 0:
            raise ValueError("shift_strength and noise_level must be >= 0")
        lo, hi = self.band
        if not 0 < lo < hi <= self.sample_rate / 2:
            raise ValueError(f"band {self.band} must lie inside (0, {self.sample_rate / 2}]")

    @property
    def n_trials(self) -> int:
        return self.subjects * self.sessions * N_CLASSES * self.trials_per_class

    def to_dict(self) -> dict:
        d = asdict(self)
        d["band"] = list(self.band)
        return d


def class_sources(config: GeneratorConfig) -> np.ndarray:
    """(3, samples) unit-RMS latent waveforms, one per class."""
    rng = np.random.default_rng((config.seed, 0))
    freqs = np.fft.rfftfreq(N_SAMPLES, d=1.0 / config.sample_rate)
    keep = (freqs >= config.band[0]) & (freqs <= config.band[1])
    out = np.empty((N_CLASSES, N_SAMPLES))
    for k in range(N_CLASSES):
        spec = np.fft.rfft(rng.standard_normal(N_SAMPLES))
        spec[~keep] = 0
        s = np.fft.irfft(spec, n=N_SAMPLES)
        out[k] = s / np.sqrt(np.mean(s * s))
    return out


def base_mixing(config: GeneratorConfig) -> np.ndarray:
    return np.random.default_rng((config.seed, 1)).standard_normal((N_CHANNELS, N_CLASSES))


def domain_mixing(config: GeneratorConfig, key: DomainKey) -> tuple[np.ndarray, float]:
    """Mixing matrix and amplitude gain for one domain."""
    rng = np.random.default_rng((config.seed, 2, key.subject, key.session))
    delta = rng.standard_normal((N_CHANNELS, N_CLASSES))
    gain = float(np.exp(config.shift_strength * rng.standard_normal()))
    return base_mixing(config) + config.shift_strength * delta, gain


def synthesize_session(config: GeneratorConfig, key: DomainKey, sources: np.ndarray | None = None) -> SessionRecord:
    sources = class_sources(config) if sources is None else sources
    mixing, gain = domain_mixing(config, key)
    rng = np.random.default_rng((config.seed, 3, key.subject, key.session))
    labels = np.repeat(np.arange(N_CLASSES, dtype=np.uint8), config.trials_per_class)
    labels = labels[rng.permutation(len(labels))]
    # (3, channels, samples): the clean pattern each class produces in this domain
    patterns = (gain * mixing.T[:, :, None] * sources[:, None, :]).astype(np.float32)
    signals = patterns[labels]
    if config.noise_level > 0:
        noise = rng.standard_normal(signals.shape, dtype=np.float32)
        signals += np.float32(config.noise_level) * noise
    return SessionRecord(key, signals, labels)


def synthesize(config: GeneratorConfig) -> Dataset:
    """Build the whole dataset in memory."""
    config.validate()
    sources = class_sources(config)
    records = [
        synthesize_session(config, DomainKey(s, k), sources)
        for s in range(1, config.subjects + 1)
        for k in range(1, config.sessions + 1)
    ]
    return Dataset(records, manifest_for(config, records))


def manifest_for(config: GeneratorConfig, records: list[SessionRecord]) -> dict:
    return build_manifest(records, seed=config.seed, generator=config.to_dict(),
                          paper_faithful=config.trials_per_class == TRIALS_PER_CLASS)


def generate_synthetic(out_dir, config: GeneratorConfig | None = None) -> Dataset:
    """Synthesize and write a dataset directory; returns the in-memory copy."""
    ds = synthesize(config or GeneratorConfig())
    write_dataset(out_dir, ds)
    return ds
