"""GDCK checkpoint container.

Layout (all integers little-endian)::

    b"GDCK" | u32 version | u64 config_len | config (UTF-8 JSON)
    u32 n_tensors
    n_tensors x { u32 name_len | name | u32 ndim | ndim x u64 | float64 LE data }
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .params import ParamSet

MAGIC = b"GDCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params: ParamSet | dict, config: dict | None = None) -> bytes:
    state = params.state_dict() if isinstance(params, ParamSet) else params
    cfg = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(cfg)), cfg, struct.pack("<I", len(state))]
    for name, arr in state.items():
        arr = np.asarray(arr, dtype="<f8")
        key = name.encode("utf-8")
        parts.append(struct.pack("<I", len(key)))
        parts.append(key)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> tuple[ParamSet, dict]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a GDCK checkpoint (bad magic)")
    try:
        return _parse(blob)
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from None


def _parse(blob: bytes) -> tuple[ParamSet, dict]:
    pos = 4
    version, clen = struct.unpack_from("<IQ", blob, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 12
    config = json.loads(blob[pos:pos + clen].decode("utf-8"))
    pos += clen
    (n,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    state = {}
    for _ in range(n):
        (klen,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + klen].decode("utf-8")
        pos += klen
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", blob, pos)
        pos += 8 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += 8 * count
        state[name] = arr.astype(np.float64)
    if pos != len(blob):
        raise CheckpointError("trailing bytes after tensor table")
    return ParamSet.from_state(state), config


def save_checkpoint(path, params: ParamSet, config: dict | None = None) -> str:
    """Write a checkpoint and return its sha256 hex digest."""
    blob = dumps(params, config)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path) -> tuple[ParamSet, dict]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"checkpoint not found: {p}")
    return loads(p.read_bytes())


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
