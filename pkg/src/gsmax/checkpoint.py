"""Chunked binary tensor container for checkpoints and activation dumps.

Layout, all integers little-endian:

    magic   8 bytes  b"GSMXTNSR"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor, in order:
      name_len u32, name (UTF-8, name_len bytes),
      rank u32, extents (rank x u64),
      payload (product(extents) x float64, C order)

Round-trips are bit-exact: the payload is the raw IEEE 754 encoding.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError

MAGIC = b"GSMXTNSR"
VERSION = 1


def save_tensors(path, tensors: dict) -> None:
    """Write name -> float64 array pairs in iteration order."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.astype("<f8", copy=False).tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated tensor file: expected {n} bytes of {what}")
    return data


def load_tensors(path) -> dict:
    """Read back a save_tensors file; insertion order preserved."""
    out = {}
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC), "magic") != MAGIC:
            raise FormatError(f"{path}: not a tensor container (bad magic)")
        version, count = struct.unpack("<II", _read_exact(f, 8, "header"))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported container version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            try:
                name = _read_exact(f, name_len, "name").decode("utf-8")
            except UnicodeDecodeError as exc:
                raise FormatError(f"{path}: tensor name is not UTF-8") from exc
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            if rank > 32:
                raise FormatError(f"{path}: implausible rank {rank} for {name!r}")
            extents = struct.unpack(f"<{rank}Q", _read_exact(f, 8 * rank, "extents"))
            size = 1
            for e in extents:
                size *= e
            payload = _read_exact(f, 8 * size, f"payload of {name!r}")
            arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(extents)
            if name in out:
                raise FormatError(f"{path}: duplicate tensor name {name!r}")
            out[name] = arr
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} tensors")
    return out
