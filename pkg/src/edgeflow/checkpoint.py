"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"EFCK"  u32 version  32-byte config hash
    u64 step  u64 epoch  u64 batch_in_epoch  u64 seed
    u32 meta_len  meta (UTF-8 JSON, sorted keys)
    u32 n_records
    per record: u32 name_len  name  u32 ndim  u64 dims...  f64 values
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fsutil import atomic_write_bytes

MAGIC = b"EFCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config_hash: bytes
    step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    seed: int = 0
    meta: dict = field(default_factory=dict)
    records: dict[str, np.ndarray] = field(default_factory=dict)

    def with_prefix(self, prefix: str) -> dict[str, np.ndarray]:
        n = len(prefix)
        return {k[n:]: v for k, v in self.records.items() if k.startswith(prefix)}

    def to_bytes(self) -> bytes:
        if len(self.config_hash) != 32:
            raise CheckpointError("config hash must be 32 bytes")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<I", VERSION))
        buf.write(self.config_hash)
        buf.write(struct.pack("<QQQQ", self.step, self.epoch, self.batch_in_epoch, self.seed))
        meta = json.dumps(self.meta, sort_keys=True, separators=(",", ":")).encode()
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
        buf.write(struct.pack("<I", len(self.records)))
        for name, arr in self.records.items():
            raw = name.encode()
            arr = np.asarray(arr, dtype="<f8")   # tobytes() is C order; keeps 0-d shape
            buf.write(struct.pack("<I", len(raw)))
            buf.write(raw)
            buf.write(struct.pack("<I", arr.ndim))
            buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            buf.write(arr.tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, expected_hash: bytes | None = None) -> "Checkpoint":
        r = _Reader(data)
        if r.take(4) != MAGIC:
            raise CheckpointError("not a checkpoint (bad magic bytes)")
        (version,) = r.unpack("<I")
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        chash = r.take(32)
        if expected_hash is not None and chash != expected_hash:
            raise CheckpointError("checkpoint config hash does not match the current model configuration")
        step, epoch, batch_in_epoch, seed = r.unpack("<QQQQ")
        (meta_len,) = r.unpack("<I")
        try:
            meta = json.loads(r.take(meta_len).decode())
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise CheckpointError("corrupt checkpoint metadata") from None
        (n,) = r.unpack("<I")
        records = {}
        for _ in range(n):
            (name_len,) = r.unpack("<I")
            name = r.take(name_len).decode()
            (ndim,) = r.unpack("<I")
            shape = r.unpack(f"<{ndim}Q") if ndim else ()
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
            records[name] = arr
        if not r.done():
            raise CheckpointError("trailing bytes after checkpoint records")
        return cls(chash, step, epoch, batch_in_epoch, seed, meta, records)

    def save(self, path: str | Path) -> None:
        atomic_write_bytes(path, self.to_bytes())

    @classmethod
    def load(cls, path: str | Path, expected_hash: bytes | None = None) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes(), expected_hash)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def done(self) -> bool:
        return self.pos == len(self.data)
