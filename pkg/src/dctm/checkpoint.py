"""Binary weight container.

Layout: magic b"DCTM1", then a u64 record count, then per record:
u64 name length, UTF-8 name, u64 rank, rank x u64 dims, and the payload
as little-endian float32. All integers little-endian. Round-trips are
bit-exact for float32 weights.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"DCTM1"


def save_checkpoint(path, named_arrays: list[tuple[str, np.ndarray]]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(named_arrays)))
        for name, arr in named_arrays:
            payload = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<Q", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<Q", payload.ndim))
            for d in payload.shape:
                fh.write(struct.pack("<Q", d))
            fh.write(payload.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: bad magic, not a DCTM1 checkpoint")
    off = len(MAGIC)

    def read_u64():
        nonlocal off
        (val,) = struct.unpack_from("<Q", blob, off)
        off += 8
        return val

    count = read_u64()
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = read_u64()
        name = blob[off:off + name_len].decode("utf-8")
        off += name_len
        rank = read_u64()
        dims = tuple(read_u64() for _ in range(rank))
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(dims)
        off += 4 * n
        out[name] = arr.copy()
    if off != len(blob):
        raise DataError(f"{path}: {len(blob) - off} trailing bytes after last record")
    return out


def restore_into(params: list[tuple[str, "object"]], loaded: dict[str, np.ndarray]) -> None:
    """Copy loaded arrays into model parameters, matching by name and shape."""
    param_names = {name for name, _ in params}
    missing = param_names - set(loaded)
    extra = set(loaded) - param_names
    if missing or extra:
        raise DataError(
            f"checkpoint/model mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, p in params:
        arr = loaded[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise DataError(
                f"checkpoint tensor '{name}' has shape {tuple(arr.shape)}, "
                f"model expects {tuple(p.data.shape)}")
        p.data = arr.astype(p.data.dtype)
