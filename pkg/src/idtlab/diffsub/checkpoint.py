"""Flat binary checkpoint format.

Layout: magic ``IDTC``, format version (u32 LE), header length (u64 LE),
JSON header mapping name -> shape, then the arrays in header order as
little-endian float32. Round-trips bit-exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MAGIC = b"IDTC"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    header = {}
    blobs = []
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype="<f4")
        header[name] = list(a.shape)
        blobs.append(a.tobytes(order="C"))
    header_bytes = json.dumps(header, sort_keys=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        out = {}
        for name, shape in header.items():
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(count * 4), dtype="<f4", count=count)
            out[name] = data.reshape(shape).copy()
        return out
