"""On-disk dataset format.

A dataset directory holds ``manifest.json`` plus, per session,
``s{SS}_sess{K}.f32`` (little-endian float32, row-major
[trial][channel][sample]) and ``s{SS}_sess{K}.lbl`` (one uint8 per trial).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .domains import (
    DEFAULT_CLASS_NAMES,
    N_CHANNELS,
    N_CLASSES,
    N_SAMPLES,
    TRIALS_PER_CLASS,
    Dataset,
    DomainKey,
    SessionRecord,
)

FORMAT_NAME = "eegdg-dataset"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


class DatasetFormatError(ValueError):
    pass


def build_manifest(records, seed=None, generator=None, paper_faithful=True, class_names=DEFAULT_CLASS_NAMES) -> dict:
    records = sorted(records, key=lambda r: r.domain)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "subjects": sorted({r.domain.subject for r in records}),
        "sessions": sorted({r.domain.session for r in records}),
        "channels": N_CHANNELS,
        "samples": N_SAMPLES,
        "class_names": list(class_names),
        "paper_faithful": bool(paper_faithful),
        "seed": seed,
        "generator": generator,
        "files": [
            {"subject": r.domain.subject, "session": r.domain.session, "stem": r.domain.stem, "trials": len(r)}
            for r in records
        ],
    }


def write_dataset(out_dir, dataset: Dataset) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = dataset.manifest or build_manifest(dataset.records)
    for r in dataset.records:
        np.ascontiguousarray(r.signals, dtype=_F32).tofile(out / f"{r.domain.stem}.f32")
        np.ascontiguousarray(r.labels, dtype=np.uint8).tofile(out / f"{r.domain.stem}.lbl")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _fail(path: Path, what: str, expected, actual):
    raise DatasetFormatError(f"{path.name}: {what} expected {expected}, got {actual}")


def load_dataset(path, mmap: bool = True) -> Dataset:
    """Read and validate a dataset directory; records come back sorted by (subject, session).

    Signals are read-only memory maps unless ``mmap`` is False.
    """
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise DatasetFormatError(f"{mpath}: manifest not found")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format") != FORMAT_NAME:
        _fail(mpath, "format", FORMAT_NAME, manifest.get("format"))
    if manifest.get("channels") != N_CHANNELS or manifest.get("samples") != N_SAMPLES:
        _fail(mpath, "channels x samples", f"{N_CHANNELS}x{N_SAMPLES}",
              f"{manifest.get('channels')}x{manifest.get('samples')}")
    faithful = manifest.get("paper_faithful", False)
    records = []
    for entry in manifest["files"]:
        key = DomainKey(int(entry["subject"]), int(entry["session"]))
        n = int(entry["trials"])
        fpath, lpath = root / f"{key.stem}.f32", root / f"{key.stem}.lbl"
        for p in (fpath, lpath):
            if not p.is_file():
                raise DatasetFormatError(f"{p.name}: file missing")
        expected = n * N_CHANNELS * N_SAMPLES * _F32.itemsize
        actual = fpath.stat().st_size
        if actual != expected:
            _fail(fpath, "byte length", f"{expected} ({n} trials x {N_CHANNELS} x {N_SAMPLES} x 4)", actual)
        if lpath.stat().st_size != n:
            _fail(lpath, "byte length", n, lpath.stat().st_size)
        shape = (n, N_CHANNELS, N_SAMPLES)
        if mmap:
            signals = np.memmap(fpath, dtype=_F32, mode="r", shape=shape)
        else:
            signals = np.fromfile(fpath, dtype=_F32).reshape(shape)
        labels = np.fromfile(lpath, dtype=np.uint8)
        if n and int(labels.max()) >= N_CLASSES:
            _fail(lpath, "labels below", N_CLASSES, int(labels.max()))
        if faithful:
            counts = np.bincount(labels, minlength=N_CLASSES).tolist()
            if counts != [TRIALS_PER_CLASS] * N_CLASSES:
                _fail(lpath, "class counts", [TRIALS_PER_CLASS] * N_CLASSES, counts)
        records.append(SessionRecord(key, signals, labels))
    return Dataset(records, manifest, str(root))
