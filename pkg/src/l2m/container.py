"""L2MT: a small named-tensor binary container.

Layout (little-endian)::

    b"L2MT"  version:u8  count:u32
    repeated count times:
        name_len:u16  name:utf-8  dtype:u8  rank:u8  dims:u32 * rank  raw data

dtype codes: 0 = float32, 1 = float64, 2 = uint32.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"L2MT"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<u4")}
_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("uint32"): 2}


class ContainerError(ValueError):
    pass


def encode(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<BI", VERSION, len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            raise ContainerError(f"{name}: unsupported dtype {arr.dtype}")
        if arr.ndim > 255:
            raise ContainerError(f"{name}: rank too large")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[_CODES[arr.dtype]]).tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> dict:
    mv = memoryview(buf)
    if bytes(mv[:4]) != MAGIC:
        raise ContainerError("not an L2MT container")
    try:
        version, count = struct.unpack_from("<BI", mv, 4)
        if version != VERSION:
            raise ContainerError(f"unsupported container version {version}")
        pos = 9
        out = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", mv, pos)
            pos += 2
            name = bytes(mv[pos:pos + ln]).decode("utf-8")
            pos += ln
            code, rank = struct.unpack_from("<BB", mv, pos)
            pos += 2
            if code not in _DTYPES:
                raise ContainerError(f"{name}: unknown dtype code {code}")
            dims = struct.unpack_from(f"<{rank}I", mv, pos)
            pos += 4 * rank
            dt = _DTYPES[code]
            nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
            if pos + nbytes > len(mv):
                raise ContainerError(f"{name}: truncated data")
            out[name] = np.frombuffer(mv[pos:pos + nbytes], dtype=dt).reshape(dims).copy()
            pos += nbytes
    except (struct.error, UnicodeDecodeError) as exc:
        raise ContainerError(f"corrupt container: {exc}") from None
    if pos != len(mv):
        raise ContainerError("trailing bytes after last entry")
    return out


def save(path, tensors: dict) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(tensors))
    os.replace(tmp, path)


def load(path) -> dict:
    return decode(Path(path).read_bytes())
