"""Binary checkpoint format.

Layout (little-endian): magic ``ACFS``, u32 version (1), u64 iteration,
u32 tensor count, then per tensor: u16 name length, UTF-8 name, u8 rank,
u32 dims[rank], f32 data.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = b"ACFS"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(iteration: int, tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<IQI", VERSION, iteration, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise CheckpointError(f"tensor {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> Tuple[int, Dict[str, np.ndarray]]:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    try:
        version, iteration, count = struct.unpack_from("<IQI", buf, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 4 + 16
        tensors: Dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            n = int(np.prod(dims, dtype=np.int64))
            if pos + 4 * n > len(buf):
                raise CheckpointError(f"truncated data for tensor {name!r}")
            tensors[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
            pos += 4 * n
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return iteration, tensors


def save(path, iteration: int, tensors: Dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(iteration, tensors))


def load(path) -> Tuple[int, Dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes())


def text_to_tensor(text: str) -> np.ndarray:
    """Store UTF-8 text as one float per byte (exact for 0..255)."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float32)


def tensor_to_text(arr: np.ndarray) -> str:
    return np.asarray(arr).astype(np.uint8).tobytes().decode("utf-8")
