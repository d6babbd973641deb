"""Run records: one JSON document per run plus an append-only ``runs.jsonl`` index."""
from __future__ import annotations

import json
import os
from pathlib import Path

from .train import ExperimentResult

INDEX = "runs.jsonl"
LOCKFILE = ".eegdg.lock"


class LockError(RuntimeError):
    pass


class DirectoryLock:
    """Exclusive lock on an output directory via an O_EXCL lockfile."""

    def __init__(self, directory):
        self.path = Path(directory) / LOCKFILE

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise LockError(f"{self.path.parent} is locked by another command ({self.path} exists)") from None
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


class RunStore:
    """Single-writer store for run records under ``root``."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        (self.root / "runs").mkdir(parents=True, exist_ok=True)

    def record_path(self, run_id: str) -> Path:
        return self.root / "runs" / f"{run_id}.json"

    def checkpoint_path(self, run_id: str) -> Path:
        return self.root / "checkpoints" / f"{run_id}.ckpt"

    def write(self, result: ExperimentResult) -> Path:
        path = self.record_path(result.run_id)
        rec = result.record()
        if rec.get("checkpoint"):
            rec["checkpoint"] = os.path.relpath(rec["checkpoint"], self.root)
        path.write_text(dumps(rec))
        line = {"run_id": result.run_id, "status": result.status, "record": os.path.relpath(path, self.root),
                "wall_clock": round(result.wall_clock, 3)}
        with open(self.root / INDEX, "a") as f:
            f.write(json.dumps(line, sort_keys=True) + "\n")
        return path

    def has(self, run_id: str) -> bool:
        return self.record_path(run_id).is_file()

    def load(self, run_id: str) -> ExperimentResult:
        return ExperimentResult.from_record(json.loads(self.record_path(run_id).read_text()))


def load_runs(root) -> list[ExperimentResult]:
    """Every run named in the index, latest record per run id, in first-seen order."""
    root = Path(root)
    index = root / INDEX
    if not index.is_file():
        raise FileNotFoundError(f"{index} not found")
    order: dict[str, str] = {}
    for line in index.read_text().splitlines():
        if line.strip():
            entry = json.loads(line)
            order[entry["run_id"]] = entry["record"]
    return [ExperimentResult.from_record(json.loads((root / rel).read_text())) for rel in order.values()]
