"""Hyperparameter search space and run enumeration."""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..algorithms import ALGORITHM_NAMES, AlgoHyperParams
from ..models import MODEL_NAMES

N_SUBJECTS = 15
N_HP_TRIALS = 3
N_SEEDS = 3
DEFAULT_MAX_STEPS = 3000
DEFAULT_EVAL_INTERVAL = 100
PIPELINES = ("loso", "pool", "finetune")


@dataclass(frozen=True)
class SearchSpace:
    """Log10 ranges for the randomly drawn trials; trial 1 always uses ``defaults``."""

    log10_lr: tuple[float, float] = (-5.0, -3.5)
    log10_lambda: tuple[float, float] = (-2.0, 2.0)
    log10_eta: tuple[float, float] = (-3.0, -1.0)
    log10_alpha: tuple[float, float] = (-1.5, -1.0)
    defaults: AlgoHyperParams = field(default_factory=AlgoHyperParams)

    def __post_init__(self):
        for name in ("log10_lr", "log10_lambda", "log10_eta", "log10_alpha"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range must be ordered low to high, got {(lo, hi)}")

    def draw(self, algorithm: str, trial: int, rng: np.random.Generator) -> AlgoHyperParams:
        if trial < 1:
            raise ValueError(f"hp trials are numbered from 1, got {trial}")
        if trial == 1:
            return self.defaults

        def log_uniform(bounds):
            return float(10 ** rng.uniform(*bounds))

        hp = replace(self.defaults, lr=log_uniform(self.log10_lr))
        if algorithm == "DANN":
            hp = replace(hp, lambda_dann=log_uniform(self.log10_lambda))
        elif algorithm == "GroupDRO":
            hp = replace(hp, eta_dro=log_uniform(self.log10_eta))
        elif algorithm == "Mixup":
            hp = replace(hp, alpha_mixup=log_uniform(self.log10_alpha))
        return hp

    def to_dict(self) -> dict:
        d = asdict(self)
        d["defaults"] = self.defaults.to_dict()
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        d = dict(d)
        defaults = AlgoHyperParams(**d.pop("defaults", {}))
        return cls(defaults=defaults, **{k: tuple(v) for k, v in d.items()})


def stable_seed(*parts) -> int:
    """Deterministic 32-bit seed from a tuple of simple values."""
    return zlib.crc32("|".join(map(str, parts)).encode())


@dataclass(frozen=True)
class RunConfig:
    model: str
    algorithm: str
    target_subject: int
    hp_trial: int
    seed_index: int
    hparams: AlgoHyperParams
    max_steps: int = DEFAULT_MAX_STEPS
    eval_interval: int = DEFAULT_EVAL_INTERVAL
    pipeline: str = "loso"
    split_seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.model not in MODEL_NAMES:
            raise ValueError(f"unknown model {self.model!r}")
        if self.algorithm not in ALGORITHM_NAMES:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {self.pipeline!r}")
        if self.hp_trial < 1 or self.seed_index < 1:
            raise ValueError("hp_trial and seed_index are numbered from 1")
        if self.max_steps < 0 or self.eval_interval < 1:
            raise ValueError("max_steps must be >= 0 and eval_interval >= 1")

    @property
    def run_id(self) -> str:
        return (f"{self.pipeline}__{self.model}__{self.algorithm}__s{self.target_subject:02d}"
                f"__hp{self.hp_trial}__seed{self.seed_index}")

    @property
    def seed(self) -> int:
        """Seed for initialisation, sampling and algorithm randomness.

        Depends on the seed index and target but not on the hp trial, so the
        trials of one seed start from the same weights.
        """
        return stable_seed("run", self.model, self.algorithm, self.target_subject, self.seed_index)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hparams"] = self.hparams.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        d["hparams"] = AlgoHyperParams(**d["hparams"])
        return cls(**d)


def draw_hparams(space: SearchSpace, model: str, algorithm: str, subject: int, trial: int,
                 search_seed: int = 0) -> AlgoHyperParams:
    rng = np.random.default_rng(stable_seed("hp", search_seed, model, algorithm, subject, trial))
    return space.draw(algorithm, trial, rng)


def enumerate_runs(model: str, algorithm: str, subjects, space: SearchSpace | None = None,
                   n_trials: int = N_HP_TRIALS, n_seeds: int = N_SEEDS, max_steps: int = DEFAULT_MAX_STEPS,
                   eval_interval: int = DEFAULT_EVAL_INTERVAL, pipeline: str = "loso",
                   search_seed: int = 0) -> list[RunConfig]:
    space = space or SearchSpace()
    out = []
    for s in subjects:
        for t in range(1, n_trials + 1):
            hp = draw_hparams(space, model, algorithm, s, t, search_seed)
            for k in range(1, n_seeds + 1):
                out.append(RunConfig(model, algorithm, s, t, k, hp, max_steps, eval_interval, pipeline))
    return out


def enumerate_sweep(models=MODEL_NAMES, algorithms=("DANN", "GroupDRO", "Mixup"), best_model: str = "ResNet1D-18",
                    subjects=range(1, N_SUBJECTS + 1), **kw) -> list[RunConfig]:
    """ERM for every model, then every other algorithm on ``best_model``."""
    runs = []
    for m in models:
        runs += enumerate_runs(m, "ERM", subjects, **kw)
    for a in algorithms:
        if a != "ERM":
            runs += enumerate_runs(best_model, a, subjects, **kw)
    return runs
