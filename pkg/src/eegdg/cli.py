"""Command-line entry point: ``eegdg <command> ...``.

Commands read an optional JSON config (``--config``); flags override file
values and unknown keys are rejected.  Errors go to stderr as one JSON object
and the exit code is nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .algorithms import ALGORITHM_NAMES
from .data import GeneratorConfig, generate_synthetic, load_dataset
from .harness import (
    DirectoryLock,
    RunConfig,
    RunStore,
    SearchSpace,
    aggregate_report,
    best_model,
    default_workers,
    draw_hparams,
    enumerate_sweep,
    execute,
    fine_tune,
    load_runs,
    render,
    run_configs,
    run_finetune,
)
from .models import MODEL_NAMES

DESK = {"subjects": [1, 2, 3], "trials": 1, "seeds": 1, "max_steps": 300}
CONFIG_DEFAULTS = {
    "data": None,
    "out": None,
    "models": list(MODEL_NAMES),
    "algos": ["DANN", "GroupDRO", "Mixup"],
    "best_model": "ResNet1D-18",
    "subjects": None,
    "trials": 3,
    "seeds": 3,
    "max_steps": 3000,
    "eval_interval": 100,
    "workers": None,
    "desk": False,
    "search_space": {},
    "search_seed": 0,
    "finetune_lr": 1e-6,
    "finetune_epochs": 100,
}


class CliError(Exception):
    def __init__(self, message: str, kind: str = "usage"):
        super().__init__(message)
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.prog}: {message}")


def load_config(path, flags: dict) -> dict:
    """Defaults, then the JSON file, then explicitly given flags."""
    cfg = dict(CONFIG_DEFAULTS)
    if path:
        try:
            file_cfg = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {path}: {exc}", "config") from None
        if not isinstance(file_cfg, dict):
            raise CliError(f"config {path} must be a JSON object", "config")
        unknown = sorted(set(file_cfg) - set(CONFIG_DEFAULTS))
        if unknown:
            raise CliError(f"unknown config keys {unknown}; allowed: {sorted(CONFIG_DEFAULTS)}", "config")
        cfg.update(file_cfg)
    cfg.update({k: v for k, v in flags.items() if k in CONFIG_DEFAULTS and v is not None and v is not False})
    if cfg["desk"]:
        for k, v in DESK.items():
            if flags.get(k) is None:
                cfg[k] = v
    if cfg["workers"] is None:
        cfg["workers"] = default_workers()
    for m in cfg["models"] + [cfg["best_model"]]:
        if m not in MODEL_NAMES:
            raise CliError(f"unknown model {m!r}; choose from {list(MODEL_NAMES)}", "config")
    for a in cfg["algos"]:
        if a not in ALGORITHM_NAMES:
            raise CliError(f"unknown algorithm {a!r}; choose from {list(ALGORITHM_NAMES)}", "config")
    return cfg


def _space(cfg) -> SearchSpace:
    try:
        return SearchSpace.from_dict(cfg["search_space"]) if cfg["search_space"] else SearchSpace()
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad search_space: {exc}", "config") from None


def _require(cfg, *keys):
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise CliError(f"missing required setting(s): {', '.join('--' + k for k in missing)}")


def _progress(r):
    acc = "failed" if r.status != "ok" else f"test {r.test_acc:.2f}% (val {r.best_val_acc:.2f}% @ step {r.selected_step})"
    print(f"{r.run_id}: {acc}", flush=True)


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    out = Path(args.out)
    if out.exists() and any(out.iterdir()) and not args.force:
        raise CliError(f"{out} exists and is not empty (use --force to overwrite)", "exists")
    config = GeneratorConfig(subjects=args.subjects, sessions=args.sessions, trials_per_class=args.trials_per_class,
                             shift_strength=args.shift, noise_level=args.noise, seed=args.seed)
    config.validate()
    with DirectoryLock(out):
        ds = generate_synthetic(out, config)
    print(f"{ds.n_trials} trials, {len(ds)} sessions -> {out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, vars(args))
    _require(cfg, "data", "out")
    ds = load_dataset(cfg["data"])
    hp = draw_hparams(_space(cfg), args.model, args.algo, args.subject, args.hp_trial, cfg["search_seed"])
    if args.lr is not None:
        hp = replace(hp, lr=args.lr)
    rc = RunConfig(args.model, args.algo, args.subject, args.hp_trial, args.seed_index, hp, cfg["max_steps"],
                   cfg["eval_interval"], pipeline=args.pipeline)
    with DirectoryLock(cfg["out"]):
        store = RunStore(cfg["out"])
        result = execute(rc, ds, store.root)
        result.extra["cli_config"] = _echo(cfg)
        store.write(result)
    _progress(result)
    return 0 if result.status == "ok" else 1


def _echo(cfg) -> dict:
    return {k: v for k, v in cfg.items() if k not in ("workers", "out")}


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, vars(args))
    subjects = cfg["subjects"] or list(range(1, 16))
    configs = enumerate_sweep(cfg["models"], cfg["algos"], cfg["best_model"], subjects, space=_space(cfg),
                              n_trials=cfg["trials"], n_seeds=cfg["seeds"], max_steps=cfg["max_steps"],
                              eval_interval=cfg["eval_interval"], search_seed=cfg["search_seed"])
    if args.dry_run:
        pairs = sorted({(c.model, c.algorithm) for c in configs})
        print(f"{len(configs)} runs: {len(pairs)} configurations x {len(subjects)} subjects x "
              f"{cfg['trials']} hp trials x {cfg['seeds']} seeds")
        if args.list:
            for c in configs:
                print(c.run_id)
        return 0
    _require(cfg, "data", "out")
    ds = load_dataset(cfg["data"])
    missing = [s for s in subjects if s not in ds.subjects]
    if missing:
        raise CliError(f"dataset has no subjects {missing}", "config")
    with DirectoryLock(cfg["out"]):
        store = RunStore(cfg["out"])
        (store.root / "sweep_config.json").write_text(json.dumps(_echo(cfg), indent=2, sort_keys=True) + "\n")
        results = run_configs(configs, ds, store, cfg["workers"], resume=args.resume, progress=_progress,
                              annotate={"cli_config": _echo(cfg)})
    for kind in ("models", "algorithms"):
        table = aggregate_report(results, kind)
        if table.rows:
            print(render(table, "md"))
    failed = [r.run_id for r in results if r.status != "ok"]
    if failed:
        raise CliError(f"{len(failed)} of {len(results)} runs failed: {failed[:5]}", "runs-failed")
    return 0


def cmd_finetune(args) -> int:
    cfg = load_config(args.config, vars(args))
    _require(cfg, "data", "out")
    ds = load_dataset(cfg["data"])
    subjects = args.subject or cfg["subjects"] or ds.subjects
    with DirectoryLock(cfg["out"]):
        store = RunStore(cfg["out"])
        if args.checkpoint:
            results = []
            for s in subjects:
                r = fine_tune(args.checkpoint, s, ds, lr=cfg["finetune_lr"], epochs=cfg["finetune_epochs"],
                              run_id=f"finetune__{Path(args.checkpoint).stem}__s{s:02d}")
                store.write(r)
                results.append(r)
                _progress(r)
        else:
            _, results = run_finetune(cfg["best_model"], ds, subjects, _space(cfg), cfg["trials"], cfg["seeds"],
                                      cfg["max_steps"], cfg["eval_interval"], store, cfg["workers"],
                                      lr=cfg["finetune_lr"], epochs=cfg["finetune_epochs"], progress=_progress,
                                      annotate={"cli_config": _echo(cfg)})
            for r in results:
                _progress(r)
    failed = [r.run_id for r in results if r.status != "ok"]
    if failed:
        raise CliError(f"{len(failed)} fine-tuning runs failed: {failed[:5]}", "runs-failed")
    return 0


def cmd_report(args) -> int:
    results = load_runs(args.runs)
    kinds = ("models", "algorithms") if args.table == "all" else (args.table,)
    chunks = []
    for kind in kinds:
        model = args.model if kind == "algorithms" else None
        if kind == "algorithms" and model is None:
            model = best_model(results) or (results[0].config["model"] if results else None)
        table = aggregate_report(results, kind, model=model)
        if table.rows:
            chunks.append(render(table, args.format))
    if not chunks:
        raise CliError(f"no complete runs under {args.runs}", "empty")
    sys.stdout.write("\n".join(chunks))
    return 0


def cmd_verify(args) -> int:
    from . import verify
    from .tensor import ops

    if args.corrupt_backward:
        ops.DEBUG_CORRUPT.add(args.corrupt_backward)
    try:
        checks = verify.run_checks(max_checks=args.max_checks)
    finally:
        ops.DEBUG_CORRUPT.discard(args.corrupt_backward)
    for c in checks:
        print(c.line())
    n_fail = sum(not c.passed for c in checks)
    print(f"{len(checks) - n_fail}/{len(checks)} checks passed")
    return 1 if n_fail else 0


# -- parser ------------------------------------------------------------------

def _add_common(p, data=True):
    p.add_argument("--config", help="JSON config file; flags override its values")
    if data:
        p.add_argument("--data", help="dataset directory")
    p.add_argument("--out", help="output directory for run records")
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.add_argument("--eval-interval", dest="eval_interval", type=int)
    p.add_argument("--workers", type=int, help="worker processes (default: $EEGDG_WORKERS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eegdg", description="Cross-session EEG domain-generalization benchmark.")
    parser.add_argument("--version", action="version", version=f"eegdg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic multi-domain dataset")
    p.add_argument("--subjects", type=int, default=15)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--trials-per-class", dest="trials_per_class", type=int, default=50)
    p.add_argument("--shift", type=float, default=0.1, help="domain shift strength")
    p.add_argument("--noise", type=float, default=0.5, help="noise standard deviation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="write into a non-empty directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="run a single training configuration")
    _add_common(p)
    p.add_argument("--model", choices=MODEL_NAMES, default="ResNet1D-18")
    p.add_argument("--algo", choices=ALGORITHM_NAMES, default="ERM")
    p.add_argument("--subject", type=int, required=True, help="target subject")
    p.add_argument("--hp-trial", dest="hp_trial", type=int, default=1)
    p.add_argument("--seed-index", dest="seed_index", type=int, default=1)
    p.add_argument("--pipeline", choices=("loso", "pool"), default="loso")
    p.add_argument("--lr", type=float, help="override the drawn learning rate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="hyperparameter search over models and algorithms")
    _add_common(p)
    p.add_argument("--models", nargs="+", choices=MODEL_NAMES)
    p.add_argument("--algos", nargs="+", choices=ALGORITHM_NAMES, help="algorithms run on --best-model")
    p.add_argument("--best-model", dest="best_model", choices=MODEL_NAMES)
    p.add_argument("--subjects", type=int, nargs="+")
    p.add_argument("--trials", type=int, help="hp trials per subject")
    p.add_argument("--seeds", type=int, help="seeds per hp trial")
    p.add_argument("--desk", action="store_true", help="desk scale: 3 subjects, 1 trial, 1 seed, 300 steps")
    p.add_argument("--dry-run", dest="dry_run", action="store_true", help="only count the runs")
    p.add_argument("--list", action="store_true", help="with --dry-run, print every run id")
    p.add_argument("--resume", action="store_true", help="skip runs that already have a record")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("finetune", help="train on the other subjects, then fine-tune the classifier")
    _add_common(p)
    p.add_argument("--subject", type=int, nargs="+")
    p.add_argument("--best-model", dest="best_model", choices=MODEL_NAMES)
    p.add_argument("--checkpoint", help="fine-tune this checkpoint instead of training one")
    p.add_argument("--trials", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--lr", dest="finetune_lr", type=float)
    p.add_argument("--epochs", dest="finetune_epochs", type=int)
    p.add_argument("--desk", action="store_true")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("report", help="render accuracy tables from run records")
    p.add_argument("--runs", required=True, help="directory holding runs.jsonl")
    p.add_argument("--format", choices=("csv", "md"), default="md")
    p.add_argument("--table", choices=("models", "algorithms", "all"), default="all")
    p.add_argument("--model", choices=MODEL_NAMES, help="model for the algorithms table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify", help="gradient checks, split invariants and algorithm equivalences")
    p.add_argument("--max-checks", dest="max_checks", type=int, default=3,
                   help="entries checked per parameter tensor of each model")
    p.add_argument("--corrupt-backward", dest="corrupt_backward", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc)}
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return 2


if __name__ == "__main__":
    sys.exit(main())
