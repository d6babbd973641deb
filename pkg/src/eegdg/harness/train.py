"""Single training runs with source-validation model selection, and fine-tuning."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..algorithms import make_algorithm
from ..data import Dataset, LeakageError, MinibatchSampler, SplitPlan, finetune_split, loso_split, pool_split
from ..models import Network, build_config, param_hash
from ..tensor import Adam, Tape, Tensor, ops
from .checkpoint import load_checkpoint, save_checkpoint
from .search import RunConfig

FINETUNE_LR = 1e-6
FINETUNE_EPOCHS = 100
FINETUNE_BATCH = 8
EVAL_BATCH = 256


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class ExperimentResult:
    run_id: str
    config: dict
    status: str = "ok"
    test_acc: float | None = None
    best_val_acc: float | None = None
    selected_step: int | None = None
    val_history: list = field(default_factory=list)
    steps_completed: int = 0
    final_loss: float | None = None
    source_subjects: list = field(default_factory=list)
    checkpoint: str | None = None
    attempts: int = 1
    error: str | None = None
    extra: dict = field(default_factory=dict)
    # kept out of the run record so that repeated runs serialise identically
    wall_clock: float = field(default=0.0, compare=False)

    def record(self) -> dict:
        d = asdict(self)
        d.pop("wall_clock")
        return d

    @classmethod
    def from_record(cls, d: dict) -> "ExperimentResult":
        return cls(**{k: v for k, v in d.items() if k != "wall_clock"})


def accuracy(net: Network, x: np.ndarray, y: np.ndarray, batch_size: int = EVAL_BATCH) -> float:
    """Eval-mode accuracy in percent."""
    if len(y) == 0:
        raise ValueError("cannot score an empty set")
    pred = net.predict(x, batch_size=batch_size)
    return float(100.0 * np.mean(pred == y))


def make_plan(config: RunConfig, dataset: Dataset) -> SplitPlan:
    if config.pipeline == "loso":
        return loso_split(dataset, config.target_subject, config.val_fraction, config.split_seed)
    return pool_split(dataset, config.target_subject, config.val_fraction, config.split_seed)


def train_one(config: RunConfig, plan: SplitPlan, checkpoint_path=None) -> ExperimentResult:
    """Train, keep the best source-validation checkpoint, and test it once on the target.

    Validation runs at step 0, every ``eval_interval`` steps, and at the
    last step; the earliest step wins ties.
    """
    if plan.target.subject != config.target_subject:
        raise ValueError(f"config targets subject {config.target_subject} but the split holds out {plan.target}")
    t0 = time.perf_counter()
    net = Network(build_config(config.model), seed=config.seed)
    algo = make_algorithm(config.algorithm, net, config.hparams, plan.sources, seed=config.seed)
    sampler = MinibatchSampler(plan, np.random.default_rng((config.seed, 1)), config.hparams.batch_per_domain)
    xv, yv, _ = plan.val_data()

    history = [(0, accuracy(net, xv, yv))]
    best_step, best_acc, best_state = 0, history[0][1], net.state_dict()
    loss = None
    for step in range(1, config.max_steps + 1):
        stats = algo.step(sampler.sample())
        loss = stats.loss
        if not math.isfinite(loss):
            worst = max(stats.domain_losses.items(), key=lambda kv: -math.inf if math.isnan(kv[1]) else kv[1])
            raise TrainingDiverged(
                f"{config.run_id}: non-finite loss {loss} at step {step} (largest domain loss {worst[1]} in {worst[0]})"
            )
        if step % config.eval_interval == 0 or step == config.max_steps:
            acc = accuracy(net, xv, yv)
            history.append((step, acc))
            if acc > best_acc:
                best_step, best_acc, best_state = step, acc, net.state_dict()

    net.load_state_dict(best_state)
    xt, yt = plan.test_data()
    test_acc = accuracy(net, xt, yt)
    result = ExperimentResult(
        run_id=config.run_id,
        config=config.to_dict(),
        test_acc=test_acc,
        best_val_acc=best_acc,
        selected_step=best_step,
        val_history=[list(h) for h in history],
        steps_completed=config.max_steps,
        final_loss=loss,
        source_subjects=plan.source_subjects,
    )
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, net, {
            "run_id": config.run_id,
            "config": config.to_dict(),
            "source_subjects": plan.source_subjects,
            "selected_step": best_step,
            "best_val_acc": best_acc,
        })
        result.checkpoint = str(checkpoint_path)
    result.wall_clock = time.perf_counter() - t0
    return result


def extract_features(net: Network, x: np.ndarray, batch_size: int = EVAL_BATCH) -> np.ndarray:
    was = net.training
    net.eval()
    try:
        return np.concatenate([net.extract(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)])
    finally:
        net.train(was)


def fine_tune(checkpoint, subject: int, dataset: Dataset, lr: float = FINETUNE_LR, epochs: int = FINETUNE_EPOCHS,
              batch_size: int = FINETUNE_BATCH, seed: int = 0, run_id: str | None = None,
              config: dict | None = None) -> ExperimentResult:
    """Train only the linear classifier on session 1 of ``subject``; test on session 2.

    ``checkpoint`` is a path or a (network, metadata) pair.  The feature
    extractor runs in eval mode and is never updated, so its outputs are
    computed once and reused for every epoch.
    """
    t0 = time.perf_counter()
    net, meta = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, Path)) else checkpoint
    sources = meta.get("source_subjects")
    if sources is None:
        raise LeakageError("checkpoint does not declare its source subjects")
    if subject in sources:
        raise LeakageError(f"checkpoint was trained with subject {subject} in its source pool")
    if lr < 0 or epochs < 0 or batch_size < 1:
        raise ValueError("fine-tuning needs lr >= 0, epochs >= 0 and batch_size >= 1")

    split = finetune_split(dataset, subject)
    x, y = split.train_data()
    before = param_hash(net.feature_parameters())
    net.eval()
    feats = extract_features(net, x)
    params = net.classifier_parameters()
    opt = Adam(params, lr=lr)
    rng = np.random.default_rng((seed, subject, 5))
    steps = 0
    loss = None
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for i in range(0, len(y), batch_size):
            idx = order[i:i + batch_size]
            with Tape() as tape:
                out = ops.softmax_cross_entropy(net.classify(Tensor(feats[idx])), y[idx])
                tape.backward(out, params)
            opt.step()
            loss = float(out.data)
            steps += 1
            if not math.isfinite(loss):
                raise TrainingDiverged(f"fine-tune of subject {subject}: non-finite loss at step {steps}")
    after = param_hash(net.feature_parameters())
    if before != after:
        raise AssertionError("feature extractor changed during fine-tuning")

    if config is None and "config" in meta:
        config = dict(meta["config"], pipeline="finetune", target_subject=subject)
    xt, yt = split.test_data()
    result = ExperimentResult(
        run_id=run_id or f"finetune__s{subject:02d}",
        config=config or {},
        test_acc=accuracy(net, xt, yt),
        best_val_acc=meta.get("best_val_acc"),
        selected_step=meta.get("selected_step"),
        steps_completed=steps,
        final_loss=loss,
        source_subjects=list(sources),
        extra={"feature_hash": after, "lr": lr, "epochs": epochs, "batch_size": batch_size},
    )
    result.wall_clock = time.perf_counter() - t0
    return result
