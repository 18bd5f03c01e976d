"""On-disk spill files holding hash-partitioned map output.

Layout: magic ``KVP1``, u32 little-endian record count, then fixed 24-byte
records ``(u64 key, f64 value, u32 map_task_id, u32 emission_index)``.
Files are written to a temporary name and atomically renamed, so re-executed
tasks (at-least-once scheduling) can only ever replace a file with identical
bytes, never expose a partial one.
"""

from __future__ import annotations

import os
import struct
import threading
from pathlib import Path

import numpy as np

MAGIC = b"KVP1"
HEADER = struct.Struct("<4sI")
RECORD_DTYPE = np.dtype([
    ("key", "<u8"),
    ("value", "<f8"),
    ("task", "<u4"),
    ("emission", "<u4"),
])


class SpillFormatError(RuntimeError):
    """A spill file failed structural validation."""


def make_records(
    keys: np.ndarray, values: np.ndarray, task_id: int, emissions: np.ndarray
) -> np.ndarray:
    out = np.empty(keys.shape[0], dtype=RECORD_DTYPE)
    out["key"] = keys
    out["value"] = values
    out["task"] = task_id
    out["emission"] = emissions
    return out


def write_partition_file(path: str | Path, records: np.ndarray) -> None:
    """Atomically write one spill file (empty record arrays are legal)."""
    records = np.ascontiguousarray(records, dtype=RECORD_DTYPE)
    path = Path(path)
    tmp = path.with_name(
        f"{path.name}.tmp-{os.getpid()}-{threading.get_ident()}")
    with open(tmp, "wb") as f:
        f.write(HEADER.pack(MAGIC, records.shape[0]))
        f.write(records.tobytes())
    os.replace(tmp, path)


def read_partition_file(path: str | Path) -> np.ndarray:
    """Read and validate one spill file, returning its record array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < HEADER.size:
        raise SpillFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SpillFormatError(f"{path}: bad magic {magic!r} at offset 0")
    expected = HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) != expected:
        raise SpillFormatError(
            f"{path}: expected {expected} bytes for {count} records, "
            f"got {len(data)}")
    return np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER.size, count=count)
