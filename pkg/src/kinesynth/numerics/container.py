"""KSN1 parameter container.

Layout::

    b"KSN1"
    repeated per parameter:
        u32 LE  name length in bytes
        bytes   UTF-8 name
        u32 LE  rank
        u32 LE  dims (rank of them)
        f64 LE  values, row-major

Parameters are written in the order given; readers return them in file order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import SchemaError

MAGIC = b"KSN1"


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise SchemaError("not a KSN1 container (bad magic bytes)")
    out: dict[str, np.ndarray] = {}
    pos = 4
    try:
        while pos < len(blob):
            (n,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
            pos += 8 * count
            out[name] = data.reshape(dims).astype(np.float64)
    except struct.error as exc:
        raise SchemaError(f"truncated KSN1 container at byte {pos}") from exc
    except ValueError as exc:
        raise SchemaError(f"truncated KSN1 container at byte {pos}") from exc
    return out


def save(path, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(arrays))


def load(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def save_params(path, params) -> None:
    save(path, {name: p.value for name, p in params.items()})


def load_params(path, params) -> None:
    """Copy stored values into an already-built parameter dict, checking names and shapes."""
    stored = load(path)
    missing = set(params) - set(stored)
    extra = set(stored) - set(params)
    if missing or extra:
        raise SchemaError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, p in params.items():
        if stored[name].shape != p.shape:
            raise SchemaError(f"{name}: stored shape {stored[name].shape} != model shape {p.shape}")
        p.value[...] = stored[name]
