"""Executing many runs: retries, worker pools, and the search and fine-tuning pipelines."""
from __future__ import annotations

import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

from ..data import Dataset, load_dataset
from .records import RunStore
from .report import subject_scores
from .search import N_HP_TRIALS, N_SEEDS, RunConfig, SearchSpace, enumerate_runs
from .train import ExperimentResult, fine_tune, make_plan, train_one

WORKERS_ENV = "EEGDG_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be >= 1, got {n}")
    return n


def execute(config: RunConfig, dataset: Dataset, store_root=None, retries: int = 1) -> ExperimentResult:
    """Run one config, retrying failures ``retries`` times before recording a failed result."""
    ckpt = None
    if store_root is not None and config.pipeline == "pool":
        ckpt = RunStore(store_root).checkpoint_path(config.run_id)
    error = None
    t0 = time.perf_counter()
    for attempt in range(1, retries + 2):
        try:
            result = train_one(config, make_plan(config, dataset), checkpoint_path=ckpt)
            result.attempts = attempt
            return result
        except Exception as exc:  # recorded, then retried once
            error = f"{type(exc).__name__}: {exc}"
            tb = traceback.format_exc(limit=3)
    failed = ExperimentResult(config.run_id, config.to_dict(), status="failed", attempts=retries + 1,
                              error=error, extra={"traceback": tb})
    failed.wall_clock = time.perf_counter() - t0
    return failed


_WORKER_DATASET: Dataset | None = None


def _init_worker(path: str) -> None:
    global _WORKER_DATASET
    _WORKER_DATASET = load_dataset(path)


def _work(args) -> ExperimentResult:
    config, store_root, retries = args
    return execute(config, _WORKER_DATASET, store_root, retries)


def run_configs(configs: list[RunConfig], dataset: Dataset, store: RunStore | None = None,
                workers: int | None = None, retries: int = 1, resume: bool = False, progress=None,
                annotate: dict | None = None) -> list[ExperimentResult]:
    """Execute configs in order; records are written by this process only, in config order.

    ``annotate`` entries are merged into each new record's ``extra``.
    """
    workers = workers or default_workers()
    root = str(store.root) if store else None
    todo, results = [], {}
    for c in configs:
        if resume and store is not None and store.has(c.run_id):
            results[c.run_id] = store.load(c.run_id)
        else:
            todo.append(c)

    def done(r: ExperimentResult) -> None:
        results[r.run_id] = r
        r.extra.update(annotate or {})
        if store is not None:
            store.write(r)
        if progress is not None:
            progress(r)

    if workers == 1 or len(todo) <= 1:
        for c in todo:
            done(execute(c, dataset, root, retries))
    else:
        if dataset.path is None:
            raise ValueError("parallel execution needs a dataset loaded from disk")
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(dataset.path,)) as pool:
            for r in pool.map(_work, [(c, root, retries) for c in todo]):
                done(r)
    return [results[c.run_id] for c in configs]


def run_search(model: str, algorithm: str, dataset: Dataset, subjects=None, space: SearchSpace | None = None,
               n_trials: int = N_HP_TRIALS, n_seeds: int = N_SEEDS, max_steps: int = 3000, eval_interval: int = 100,
               store: RunStore | None = None, workers: int | None = None, **kw):
    """All runs of one (model, algorithm) pair; returns (per-subject scores, raw results)."""
    subjects = list(subjects or dataset.subjects)
    configs = enumerate_runs(model, algorithm, subjects, space, n_trials, n_seeds, max_steps, eval_interval)
    results = run_configs(configs, dataset, store, workers, **kw)
    return subject_scores(results), results


def run_finetune(model: str, dataset: Dataset, subjects=None, space: SearchSpace | None = None,
                 n_trials: int = N_HP_TRIALS, n_seeds: int = N_SEEDS, max_steps: int = 3000,
                 eval_interval: int = 100, store: RunStore | None = None, workers: int | None = None,
                 lr: float = 1e-6, epochs: int = 100, annotate: dict | None = None, **kw):
    """Train ERM on the 14-subject pool for each subject, then fine-tune its classifier.

    Returns (per-subject scores, fine-tuning results).
    """
    subjects = list(subjects or dataset.subjects)
    configs = enumerate_runs(model, "ERM", subjects, space, n_trials, n_seeds, max_steps, eval_interval,
                             pipeline="pool")
    pooled = run_configs(configs, dataset, store, workers, annotate=annotate, **kw)
    out = []
    for cfg, base in zip(configs, pooled):
        ft_cfg = replace(cfg, pipeline="finetune")
        if base.status != "ok":
            r = ExperimentResult(ft_cfg.run_id, ft_cfg.to_dict(), status="failed",
                                 error=f"source model {base.run_id} failed")
        else:
            ckpt = base.checkpoint
            if store is not None and ckpt and not os.path.isabs(ckpt):
                ckpt = str(store.root / ckpt)
            try:
                r = fine_tune(ckpt, cfg.target_subject, dataset, lr=lr, epochs=epochs, seed=cfg.seed,
                              run_id=ft_cfg.run_id, config=ft_cfg.to_dict())
            except Exception as exc:
                r = ExperimentResult(ft_cfg.run_id, ft_cfg.to_dict(), status="failed",
                                     error=f"{type(exc).__name__}: {exc}")
        r.extra.update(annotate or {})
        if store is not None:
            store.write(r)
        out.append(r)
    return subject_scores(out), out
