"""SFCK1 checkpoint container: named tensors in a flat binary file.

Layout (little-endian): magic ``SFCK1``; then per tensor — u16 name
length, UTF-8 name, u8 rank, u32 dims, float64 payload — until EOF.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

MAGIC = b"SFCK1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: dict[str, Tensor | np.ndarray], path: str | Path) -> None:
    parts = [MAGIC]
    for name in sorted(params):
        arr = params[name]
        # note: ascontiguousarray would promote 0-d tensors to 1-d
        data = np.asarray(arr.data if isinstance(arr, Tensor) else arr, dtype="<f8")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}I", *data.shape))
        parts.append(data.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:5]!r}")
    out: dict[str, np.ndarray] = {}
    off = 5
    try:
        while off < len(blob):
            (name_len,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<B", blob, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}I", blob, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            if len(blob) < off + 8 * count:
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
            off += 8 * count
            out[name] = arr.reshape(dims).astype(np.float64)
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated entry ({exc})") from exc
    return out


def assign_params(params: dict[str, Tensor], state: dict[str, np.ndarray],
                  prefix: str = "", strict: bool = True) -> None:
    missing = []
    for name, tensor in params.items():
        key = prefix + name
        if key not in state:
            missing.append(key)
            continue
        arr = state[key]
        if arr.shape != tensor.data.shape:
            raise CheckpointError(
                f"{key}: checkpoint shape {arr.shape} != model shape {tensor.data.shape}")
        tensor.data = arr.astype(tensor.data.dtype)
    if strict and missing:
        raise CheckpointError(f"missing tensors in checkpoint: {missing[:5]}...")
