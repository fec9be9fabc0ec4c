"""Bit-exact on-disk formats: embedding shards and the rerank index.

Index file layout (all integers little-endian):

    bytes 0-3   magic "LIRX"
    bytes 4-7   version, u32 (currently 1)
    byte  8     dtype code: 0=f32, 1=f16, 2=bit
    bytes 9-12  dim, u32 (elements, or bits for dtype=bit)
    bytes 13-20 record_count, u64
    id table    per record: u16 id length, id bytes (UTF-8),
                u16 rows, u64 offset into the payload section
    payload     concatenated records, record length = rows * bytes/vector
                (f32: dim*4, f16: dim*2, bit: dim/8)

The id table is sorted by passage id (bytewise) with unique ids, and
offsets are strictly increasing with records packed back to back, so the
payload is in id order and the file size is exactly header + table +
sum of record lengths.

Shard files carry the same header fields under magic "LIRS" (version 1,
dense dtypes only) with records written inline: u16 id length, id bytes,
u16 rows, then the row-major values. Shards are the interchange format
between embedding exporters and the index builder.
"""

from __future__ import annotations

import mmap
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import TokenEmbeddingMatrix
from .errors import FormatError, LateriError, UnknownPassage
from .quantize import PackedBinaryMatrix, binarize

INDEX_MAGIC = b"LIRX"
SHARD_MAGIC = b"LIRS"
VERSION = 1
HEADER = struct.Struct("<4sIBIQ")  # magic, version, dtype code, dim, record_count
HEADER_BYTES = HEADER.size

MAX_PASSAGE_ROWS = 192

_DTYPE_CODES = {"f32": 0, "f16": 1, "bit": 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_NP_DTYPES = {"f32": np.dtype("<f4"), "f16": np.dtype("<f2")}


def bytes_per_vector(dtype: str, dim: int) -> int:
    if dtype == "f32":
        return dim * 4
    if dtype == "f16":
        return dim * 2
    if dtype == "bit":
        if dim % 8 != 0:
            raise LateriError("bit dtype requires dim to be a multiple of 8")
        return dim // 8
    raise LateriError(f"unknown dtype {dtype!r}")


def _pack_header(magic: bytes, dtype: str, dim: int, record_count: int) -> bytes:
    return HEADER.pack(magic, VERSION, _DTYPE_CODES[dtype], dim, record_count)


def _read_header(raw: bytes, path: Path, expect_magic: bytes) -> tuple[str, int, int]:
    if len(raw) < HEADER_BYTES:
        raise FormatError(f"{path}: truncated header")
    magic, version, code, dim, count = HEADER.unpack_from(raw)
    if magic != expect_magic:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {code}")
    if dim < 1:
        raise FormatError(f"{path}: invalid dim {dim}")
    return _CODE_DTYPES[code], dim, count


# ---------------------------------------------------------------------------
# Shards
# ---------------------------------------------------------------------------


def write_shard(
    path: str | Path,
    records: Iterable[tuple[str, np.ndarray]],
    dtype: str = "f32",
) -> int:
    """Write embedding records to a shard file; returns the record count."""
    if dtype not in ("f32", "f16"):
        raise LateriError(f"shard dtype must be f32 or f16, got {dtype!r}")
    np_dtype = _NP_DTYPES[dtype]
    path = Path(path)
    body = bytearray()
    count = 0
    dim = None
    for pid, values in records:
        arr = np.asarray(values)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise LateriError(f"record {pid!r}: values must be a non-empty 2-D matrix")
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise LateriError(f"record {pid!r}: dim {arr.shape[1]} != shard dim {dim}")
        id_bytes = pid.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise LateriError(f"record id too long: {pid!r}")
        if arr.shape[0] > 0xFFFF:
            raise LateriError(f"record {pid!r}: too many rows")
        body += struct.pack("<H", len(id_bytes))
        body += id_bytes
        body += struct.pack("<H", arr.shape[0])
        body += arr.astype(np_dtype).tobytes(order="C")
        count += 1
    if dim is None:
        raise LateriError("cannot write an empty shard")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_pack_header(SHARD_MAGIC, dtype, dim, count))
        fh.write(bytes(body))
    os.replace(tmp, path)
    return count


@dataclass
class ShardFile:
    """A fully parsed shard: header fields plus (id, values) records."""

    path: Path
    dtype: str
    dim: int
    records: list[tuple[str, np.ndarray]] = field(default_factory=list)


def iter_shard(path: str | Path) -> Iterator[tuple[str, int, np.ndarray]]:
    """Yield (passage_id, dim, values) records from a shard, streaming."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    dtype, dim, count = _read_header(raw, path, SHARD_MAGIC)
    if dtype == "bit":
        raise FormatError(f"{path}: shards must hold dense records")
    np_dtype = _NP_DTYPES[dtype]
    pos = HEADER_BYTES
    for i in range(count):
        try:
            (id_len,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            if len(raw) < pos + id_len + 2:
                raise struct.error
            pid = raw[pos : pos + id_len].decode("utf-8")
            pos += id_len
            (rows,) = struct.unpack_from("<H", raw, pos)
            pos += 2
            nbytes = rows * dim * np_dtype.itemsize
            if len(raw) < pos + nbytes:
                raise struct.error
            values = np.frombuffer(raw, dtype=np_dtype, count=rows * dim, offset=pos)
            pos += nbytes
        except struct.error:
            raise FormatError(f"{path}: truncated record {i}") from None
        yield pid, dim, values.reshape(rows, dim)
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes after last record")


def read_shard(path: str | Path) -> ShardFile:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.read(HEADER_BYTES)
    dtype, dim, _ = _read_header(header, path, SHARD_MAGIC)
    records = [(pid, values) for pid, _, values in iter_shard(path)]
    return ShardFile(path=path, dtype=dtype, dim=dim, records=records)


# ---------------------------------------------------------------------------
# Index build / load
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BuildReport:
    record_count: int
    dim: int
    dtype: str
    header_bytes: int
    id_table_bytes: int
    payload_bytes: int
    file_bytes: int
    duplicates: str  # policy outcome; duplicates are a hard error


def build_index(
    shard_paths: Sequence[str | Path],
    out: str | Path,
    dtype: str = "f32",
    quantize: bool = False,
) -> BuildReport:
    """Build a rerank index from embedding shards.

    All shards must agree on dim. With quantize=True each record is
    sign-binarized before storage and the index dtype becomes "bit"
    (requires dim to be a multiple of 8). Duplicate passage ids across
    shards are a hard error: silent overwrite would corrupt evaluation.
    """
    if not shard_paths:
        raise LateriError("no shards given")
    if dtype not in ("f32", "f16"):
        raise LateriError(f"index dtype must be f32 or f16 (use quantize for bit), got {dtype!r}")
    out_dtype = "bit" if quantize else dtype
    np_dtype = _NP_DTYPES.get(dtype)

    records: dict[str, bytes] = {}
    rows_of: dict[str, int] = {}
    dim: int | None = None
    for shard_path in shard_paths:
        for pid, shard_dim, values in iter_shard(shard_path):
            if dim is None:
                dim = shard_dim
                if quantize and dim % 8 != 0:
                    raise LateriError(f"quantize requires dim multiple of 8, got {dim}")
            elif shard_dim != dim:
                raise LateriError(f"mixed dims across shards: {dim} vs {shard_dim} in {shard_path}")
            if pid in records:
                raise LateriError(f"duplicate passage id across shards: {pid!r}")
            rows = values.shape[0]
            if not 1 <= rows <= MAX_PASSAGE_ROWS:
                raise LateriError(f"record {pid!r}: rows {rows} outside 1..{MAX_PASSAGE_ROWS}")
            if quantize:
                packed = binarize(TokenEmbeddingMatrix(values))
                payload = packed.to_bytes()
            else:
                payload = np.ascontiguousarray(values.astype(np_dtype)).tobytes()
            records[pid] = payload
            rows_of[pid] = rows

    assert dim is not None
    ordered = sorted(records, key=lambda pid: pid.encode("utf-8"))
    table = bytearray()
    offset = 0
    for pid in ordered:
        id_bytes = pid.encode("utf-8")
        table += struct.pack("<H", len(id_bytes))
        table += id_bytes
        table += struct.pack("<HQ", rows_of[pid], offset)
        offset += len(records[pid])

    out = Path(out)
    tmp = out.with_name(out.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_pack_header(INDEX_MAGIC, out_dtype, dim, len(ordered)))
        fh.write(bytes(table))
        for pid in ordered:
            fh.write(records[pid])
    os.replace(tmp, out)

    payload_bytes = offset
    file_bytes = HEADER_BYTES + len(table) + payload_bytes
    return BuildReport(
        record_count=len(ordered),
        dim=dim,
        dtype=out_dtype,
        header_bytes=HEADER_BYTES,
        id_table_bytes=len(table),
        payload_bytes=payload_bytes,
        file_bytes=file_bytes,
        duplicates="none",
    )


class RerankIndex:
    """Read-only random-access view of an index file.

    The id table lives in memory; record payloads are read through a shared
    mmap on demand, so concurrent get_passage calls are safe without locks.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "rb")
        try:
            self._mm = mmap.mmap(self._fh.fileno(), 0, access=mmap.ACCESS_READ)
        except ValueError:
            self._fh.close()
            raise FormatError(f"{self.path}: empty file") from None
        try:
            self.dtype, self.dim, self.record_count = _read_header(
                self._mm[:HEADER_BYTES], self.path, INDEX_MAGIC
            )
            self._record_bytes = bytes_per_vector(self.dtype, self.dim)
            self._table: dict[str, tuple[int, int]] = {}
            pos = HEADER_BYTES
            for i in range(self.record_count):
                try:
                    (id_len,) = struct.unpack_from("<H", self._mm, pos)
                    pos += 2
                    pid = self._mm[pos : pos + id_len].decode("utf-8")
                    pos += id_len
                    rows, offset = struct.unpack_from("<HQ", self._mm, pos)
                    pos += 10
                except (struct.error, IndexError):
                    raise FormatError(f"{self.path}: truncated id table") from None
                self._table[pid] = (offset, rows)
            self._payload_start = pos
            declared = sum(rows * self._record_bytes for _, rows in self._table.values())
            actual = len(self._mm) - self._payload_start
            if declared != actual:
                raise FormatError(
                    f"{self.path}: truncated payload (declared {declared} bytes, found {actual})"
                )
        except Exception:
            self.close()
            raise

    # -- container niceties ------------------------------------------------

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._table

    def __len__(self) -> int:
        return self.record_count

    def ids(self) -> list[str]:
        """Passage ids in table (bytewise ascending) order."""
        return list(self._table)

    def __enter__(self) -> "RerankIndex":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if getattr(self, "_mm", None) is not None:
            self._mm.close()
            self._mm = None
        if getattr(self, "_fh", None) is not None:
            self._fh.close()
            self._fh = None

    # -- record access -----------------------------------------------------

    def get_passage(self, passage_id: str) -> TokenEmbeddingMatrix | PackedBinaryMatrix:
        """Record for one passage id; dense dtypes come back bit-identical."""
        try:
            offset, rows = self._table[passage_id]
        except KeyError:
            raise UnknownPassage(passage_id) from None
        start = self._payload_start + offset
        length = rows * self._record_bytes
        if self.dtype == "bit":
            return PackedBinaryMatrix.from_bytes(self._mm[start : start + length], rows, self.dim)
        # copied out so record lifetime is independent of the index handle
        values = np.frombuffer(
            self._mm, dtype=_NP_DTYPES[self.dtype], count=rows * self.dim, offset=start
        ).copy()
        return TokenEmbeddingMatrix(values.reshape(rows, self.dim))

    def stack_passages(self, passage_ids: Sequence[str]) -> tuple[np.ndarray, list[int]]:
        """Bulk fetch: all records widened to float32 in one (sum rows, dim)
        array plus per-record row counts. Single copy out of the mmap; used
        by the rerank hot path.
        """
        if self.dtype == "bit":
            raise LateriError("stack_passages requires a dense index")
        np_dtype = _NP_DTYPES[self.dtype]
        rows_list: list[int] = []
        spans: list[tuple[int, int]] = []
        total = 0
        for pid in passage_ids:
            try:
                offset, rows = self._table[pid]
            except KeyError:
                raise UnknownPassage(pid) from None
            rows_list.append(rows)
            spans.append((offset, rows))
            total += rows
        stacked = np.empty((total, self.dim), dtype=np.float32)
        pos = 0
        for offset, rows in spans:
            view = np.frombuffer(
                self._mm, dtype=np_dtype, count=rows * self.dim,
                offset=self._payload_start + offset,
            )
            stacked[pos : pos + rows] = view.reshape(rows, self.dim)
            pos += rows
        return stacked, rows_list


def load_index(path: str | Path) -> RerankIndex:
    """Open an index read-only; fails on bad magic, version or truncation."""
    return RerankIndex(path)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    path: Path
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _validate_dense_values(values: np.ndarray, pid: str, report: ValidationReport) -> None:
    if not np.all(np.isfinite(values)):
        report.violations.append(f"non-finite value in record {pid!r}")


def validate_index(path: str | Path) -> ValidationReport:
    """Check every header/offset/length invariant of an index or shard file.

    Findings are report entries, not exceptions; only I/O problems raise.
    Shard files (magic "LIRS") are validated against the shard contract.
    """
    path = Path(path)
    report = ValidationReport(path=path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_BYTES:
        report.violations.append("truncated header")
        return report
    magic = raw[:4]
    if magic == SHARD_MAGIC:
        return _validate_shard_bytes(raw, report)
    if magic != INDEX_MAGIC:
        report.violations.append(f"bad magic {magic!r}")
        return report
    _, version, code, dim, count = HEADER.unpack_from(raw)
    if version != VERSION:
        report.violations.append(f"unsupported version {version}")
        return report
    if code not in _CODE_DTYPES:
        report.violations.append(f"unknown dtype code {code}")
        return report
    dtype = _CODE_DTYPES[code]
    if dim < 1:
        report.violations.append(f"invalid dim {dim}")
        return report
    if dtype == "bit" and dim % 8 != 0:
        report.violations.append(f"bit dtype with dim {dim} not a multiple of 8")
        return report
    record_bytes = bytes_per_vector(dtype, dim)

    entries: list[tuple[str, int, int]] = []
    pos = HEADER_BYTES
    for i in range(count):
        if len(raw) < pos + 2:
            report.violations.append(f"truncated id table at entry {i}")
            return report
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if len(raw) < pos + id_len + 10:
            report.violations.append(f"truncated id table at entry {i}")
            return report
        pid = raw[pos : pos + id_len].decode("utf-8", errors="replace")
        pos += id_len
        rows, offset = struct.unpack_from("<HQ", raw, pos)
        pos += 10
        entries.append((pid, rows, offset))
    payload_start = pos

    prev_id: bytes | None = None
    expected_offset = 0
    for pid, rows, offset in entries:
        id_bytes = pid.encode("utf-8")
        if prev_id is not None and id_bytes <= prev_id:
            report.violations.append(f"id table not sorted/unique at {pid!r}")
        prev_id = id_bytes
        if rows < 1:
            report.violations.append(f"record {pid!r} has zero rows")
        if offset != expected_offset:
            report.violations.append(f"non-monotonic offset at record {pid!r}")
        expected_offset += rows * record_bytes

    declared = sum(rows * record_bytes for _, rows, _ in entries)
    actual = len(raw) - payload_start
    if declared != actual:
        report.violations.append(
            f"payload length mismatch (declared {declared} bytes, found {actual})"
        )
        return report

    if dtype in _NP_DTYPES:
        np_dtype = _NP_DTYPES[dtype]
        for pid, rows, offset in entries:
            start = payload_start + offset
            n = rows * dim
            if start + n * np_dtype.itemsize > len(raw):
                continue  # already reported through the length mismatch path
            values = np.frombuffer(raw, dtype=np_dtype, count=n, offset=start)
            _validate_dense_values(values, pid, report)
    return report


def _validate_shard_bytes(raw: bytes, report: ValidationReport) -> ValidationReport:
    _, version, code, dim, count = HEADER.unpack_from(raw)
    if version != VERSION:
        report.violations.append(f"unsupported version {version}")
        return report
    if code not in (0, 1):
        report.violations.append(f"shard dtype code {code} not dense")
        return report
    if dim < 1:
        report.violations.append(f"invalid dim {dim}")
        return report
    np_dtype = _NP_DTYPES[_CODE_DTYPES[code]]
    seen: set[str] = set()
    pos = HEADER_BYTES
    for i in range(count):
        if len(raw) < pos + 2:
            report.violations.append(f"truncated record {i}")
            return report
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if len(raw) < pos + id_len + 2:
            report.violations.append(f"truncated record {i}")
            return report
        pid = raw[pos : pos + id_len].decode("utf-8", errors="replace")
        pos += id_len
        (rows,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        if pid in seen:
            report.violations.append(f"duplicate record id {pid!r}")
        seen.add(pid)
        if not 1 <= rows <= MAX_PASSAGE_ROWS:
            report.violations.append(f"record {pid!r} rows {rows} outside 1..{MAX_PASSAGE_ROWS}")
        nbytes = rows * dim * np_dtype.itemsize
        if len(raw) < pos + nbytes:
            report.violations.append(f"truncated record {pid!r}")
            return report
        values = np.frombuffer(raw, dtype=np_dtype, count=rows * dim, offset=pos)
        _validate_dense_values(values, pid, report)
        pos += nbytes
    if pos != len(raw):
        report.violations.append(f"{len(raw) - pos} trailing bytes after last record")
    return report


def validate_shard(path: str | Path) -> ValidationReport:
    """Validate a shard file; thin wrapper over validate_index dispatch."""
    path = Path(path)
    report = ValidationReport(path=path)
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_BYTES:
        report.violations.append("truncated header")
        return report
    if raw[:4] != SHARD_MAGIC:
        report.violations.append(f"bad magic {raw[:4]!r}")
        return report
    return _validate_shard_bytes(raw, report)
