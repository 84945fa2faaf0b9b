"""Single-file checkpoint container.

Layout (all little-endian)::

    b"DBCK"                 magic
    u32 version             (= 1)
    u32 n_bytes + JSON      config snapshot and scalar metadata
    u32 n_tensors
    per tensor:
        u16 n_bytes + UTF-8 name      e.g. "live/vae.encoder.0.weight"
        u8 ndim, ndim x u64 shape
        float32 payload, row-major

Tensor names are grouped by prefix: ``live/`` model parameters, ``ema/``
shadow parameters, ``buffer/`` latent statistics, ``optim/`` Adam moments.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import BadMagicError, DataError, TruncatedPayloadError, VersionMismatchError

MAGIC = b"DBCK"
VERSION = 1
GROUPS = ("live", "ema", "buffer", "optim")


@dataclass
class Checkpoint:
    meta: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        p = prefix + "/"
        return {k[len(p):]: v for k, v in self.tensors.items() if k.startswith(p)}


def write_checkpoint(ckpt: Checkpoint, path) -> int:
    meta = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        arr = np.array(ckpt.tensors[name], dtype="<f4", order="C")  # keeps 0-d shapes
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    blob = b"".join(parts)
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return len(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedPayloadError(f"checkpoint truncated while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise BadMagicError(f"{path} is not a checkpoint file")
    version, meta_len = r.unpack("<II", "header")
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    try:
        meta = json.loads(r.take(meta_len, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"checkpoint config block is corrupt: {exc}") from None
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for _ in range(count):
        (n,) = r.unpack("<H", "name length")
        name = r.take(n, "name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"{name} rank")
        shape = r.unpack(f"<{ndim}Q", f"{name} shape")
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(4 * size, name), dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float32)
    if r.pos != len(r.blob):
        raise DataError("trailing bytes after the last checkpoint tensor")
    return Checkpoint(meta, tensors)


def to_numpy(t: torch.Tensor) -> np.ndarray:
    return t.detach().cpu().to(torch.float32).numpy()


def optimizer_tensors(optimizer: torch.optim.Optimizer, names: list[str]) -> tuple[dict, dict]:
    """Adam moments keyed by parameter name, plus per-parameter step counts."""
    tensors, steps = {}, {}
    params = [p for g in optimizer.param_groups for p in g["params"]]
    for name, p in zip(names, params):
        st = optimizer.state.get(p)
        if not st:
            continue
        tensors[f"{name}.exp_avg"] = to_numpy(st["exp_avg"])
        tensors[f"{name}.exp_avg_sq"] = to_numpy(st["exp_avg_sq"])
        steps[name] = float(st["step"])
    return tensors, steps


def load_optimizer_tensors(optimizer: torch.optim.Optimizer, names: list[str], tensors: dict, steps: dict):
    params = [p for g in optimizer.param_groups for p in g["params"]]
    for name, p in zip(names, params):
        if name not in steps:
            continue
        optimizer.state[p] = {
            "step": torch.tensor(steps[name]),
            "exp_avg": torch.from_numpy(tensors[f"{name}.exp_avg"].copy()).to(p.dtype),
            "exp_avg_sq": torch.from_numpy(tensors[f"{name}.exp_avg_sq"].copy()).to(p.dtype),
        }
