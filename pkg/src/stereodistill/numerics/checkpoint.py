"""Binary parameter checkpoints.

Layout: magic "DDCKPT01", then one record per tensor:
  name length (u64 LE), UTF-8 name, rank (u64 LE), dims (u64 LE each),
  float64 payload (little-endian, row-major). Records run to end of file.
Round-trips are bit-exact.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DDCKPT01"


class CheckpointError(IOError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [MAGIC]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype=np.float64)
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<Q", len(nb)))
        chunks.append(nb)
        chunks.append(struct.pack("<Q", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad checkpoint magic")
    out: dict[str, np.ndarray] = {}
    off = len(MAGIC)
    total = len(raw)
    while off < total:
        if off + 8 > total:
            raise CheckpointError(f"{path}: truncated record header")
        (nlen,) = struct.unpack_from("<Q", raw, off)
        off += 8
        name = raw[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<Q", raw, off)
        off += 8
        dims = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        count = 1
        for d in dims:
            count *= d
        end = off + 8 * count
        if end > total:
            raise CheckpointError(f"{path}: truncated payload for '{name}'")
        arr = np.frombuffer(raw[off:end], dtype="<f8").astype(np.float64)
        out[name] = arr.reshape(dims)
        off = end
    return out
