"""Binary checkpoints.

Layout: the 6-byte magic ``EEGDG1``, a little-endian uint32 header length, a
UTF-8 JSON header (model name, shape table, metadata), then every tensor of
the state dict as little-endian float32 in declaration order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..models import Network, build_config

MAGIC = b"EEGDG1"
VERSION = 1
_F32 = np.dtype("<f4")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, net: Network, meta: dict | None = None) -> None:
    state = net.state_dict()
    header = {
        "version": VERSION,
        "model": net.config.name,
        "tensors": [{"name": k, "shape": list(v.shape)} for k, v in state.items()],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for v in state.values():
            f.write(np.ascontiguousarray(v, dtype=_F32).tobytes())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:len(MAGIC)]!r}")
    (n,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    header = json.loads(raw[start:start + n])
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    offset = start + n
    state = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        end = offset + count * _F32.itemsize
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated while reading {t['name']}")
        state[t["name"]] = np.frombuffer(raw, dtype=_F32, count=count, offset=offset).reshape(t["shape"])
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, state


def load_checkpoint(path) -> tuple[Network, dict]:
    """Rebuild the network from a checkpoint; returns (network, metadata)."""
    header, state = read_checkpoint(path)
    net = Network(build_config(header["model"]))
    net.load_state_dict(state)
    return net, header["meta"]
