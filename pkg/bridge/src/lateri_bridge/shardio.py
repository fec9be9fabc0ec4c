"""Writer (and test-side reader) for the engine's shard file format.

The format is the engine's public interchange contract: magic "LIRS",
version u32 (=1), dtype byte (0=f32, 1=f16), dim u32, record_count u64,
all little-endian; then per record a u16 id length, the UTF-8 id bytes,
a u16 row count, and the row-major values in the shard dtype.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"LIRS"
VERSION = 1
HEADER = struct.Struct("<4sIBIQ")

_DTYPES = {"f32": (0, np.dtype("<f4")), "f16": (1, np.dtype("<f2"))}


def write_shard(
    path: str | Path,
    records: Iterable[tuple[str, np.ndarray]],
    dtype: str = "f32",
) -> Path:
    """Write (id, matrix) records; returns the path."""
    if dtype not in _DTYPES:
        raise ValueError(f"shard dtype must be f32 or f16, got {dtype!r}")
    code, np_dtype = _DTYPES[dtype]
    path = Path(path)
    body = bytearray()
    count = 0
    dim = None
    for record_id, values in records:
        arr = np.asarray(values)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"record {record_id!r}: expected a non-empty 2-D matrix")
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise ValueError(f"record {record_id!r}: dim {arr.shape[1]} != {dim}")
        id_bytes = record_id.encode("utf-8")
        body += struct.pack("<H", len(id_bytes))
        body += id_bytes
        body += struct.pack("<H", arr.shape[0])
        body += arr.astype(np_dtype).tobytes(order="C")
        count += 1
    if dim is None:
        raise ValueError("no records to write")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, code, dim, count))
        fh.write(bytes(body))
    os.replace(tmp, path)
    return path


def read_shard(path: str | Path) -> tuple[str, int, list[tuple[str, np.ndarray]]]:
    """Parse a shard back into (dtype, dim, records); used by the tests."""
    raw = Path(path).read_bytes()
    magic, version, code, dim, count = HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a version-{VERSION} shard")
    np_dtype = {0: np.dtype("<f4"), 1: np.dtype("<f2")}[code]
    records = []
    pos = HEADER.size
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        record_id = raw[pos : pos + id_len].decode("utf-8")
        pos += id_len
        (rows,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        values = np.frombuffer(raw, dtype=np_dtype, count=rows * dim, offset=pos)
        pos += rows * dim * np_dtype.itemsize
        records.append((record_id, values.reshape(rows, dim).copy()))
    return {0: "f32", 1: "f16"}[code], dim, records
