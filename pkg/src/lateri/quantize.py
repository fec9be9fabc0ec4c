"""Sign binarization, bit-packed storage and popcount-based MaxSim.

Bit layout contract (shared with the index file format): each token vector
of width dim_bits (a multiple of 8) becomes dim_bits/8 bytes, bit index =
element index, LSB-first within each byte, bytes little-endian within the
in-memory 64-bit words, trailing pad bits zero. Sign convention: an element
>= 0 packs to bit 1 (zero counts as positive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LateriError
from .core import (
    SimilarityMetric,
    TokenEmbeddingMatrix,
    maxsim_scores,
    sort_candidates,
    validate_query_matrix,
    _ladder_sum,
)

WORD_BITS = 64

BYTES_PER_VECTOR = {"f32": 4.0, "f16": 2.0, "bit": 0.125}


def _words_per_row(dim_bits: int) -> int:
    return (dim_bits + WORD_BITS - 1) // WORD_BITS


@dataclass(frozen=True)
class PackedBinaryMatrix:
    """Sign bits of a token matrix, packed one row per run of 64-bit words."""

    dim_bits: int
    words: np.ndarray  # (rows, words_per_row) uint64

    def __post_init__(self) -> None:
        if self.dim_bits < 8 or self.dim_bits % 8 != 0:
            raise LateriError(f"dim_bits must be a positive multiple of 8, got {self.dim_bits}")
        arr = np.asarray(self.words, dtype=np.uint64)
        if arr.ndim != 2 or arr.shape[1] != _words_per_row(self.dim_bits):
            raise LateriError(
                f"expected shape (rows, {_words_per_row(self.dim_bits)}), got {arr.shape}"
            )
        pad = self.dim_bits % WORD_BITS
        if pad and arr.shape[0]:
            keep = np.uint64((1 << pad) - 1)
            if np.any(arr[:, -1] & ~keep):
                raise LateriError("pad bits beyond dim_bits must be zero")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "words", arr)

    @property
    def rows(self) -> int:
        return self.words.shape[0]

    def to_bytes(self) -> bytes:
        """Row-major payload, dim_bits/8 bytes per row (pad bytes dropped)."""
        nbytes = self.dim_bits // 8
        byte_view = self.words.view(np.uint8).reshape(self.rows, -1)
        return byte_view[:, :nbytes].tobytes()

    @classmethod
    def from_bytes(cls, payload: bytes, rows: int, dim_bits: int) -> "PackedBinaryMatrix":
        nbytes = dim_bits // 8
        if len(payload) != rows * nbytes:
            raise LateriError(
                f"packed payload is {len(payload)} bytes, expected {rows * nbytes}"
            )
        full = _words_per_row(dim_bits) * 8
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(rows, nbytes)
        padded = np.zeros((rows, full), dtype=np.uint8)
        padded[:, :nbytes] = raw
        return cls(dim_bits=dim_bits, words=padded.view(np.uint64))


def binarize(matrix: TokenEmbeddingMatrix) -> PackedBinaryMatrix:
    """Pack the elementwise sign of a token matrix (>= 0 maps to bit 1)."""
    if matrix.dim % 8 != 0:
        raise LateriError(f"binarize requires dim to be a multiple of 8, got {matrix.dim}")
    bits = (matrix.as_float32() >= 0.0).astype(np.uint8)
    packed = np.packbits(bits, axis=1, bitorder="little")
    return PackedBinaryMatrix.from_bytes(packed.tobytes(), matrix.rows, matrix.dim)


def unpack_bits(packed: PackedBinaryMatrix) -> np.ndarray:
    """(rows, dim_bits) array of 0/1 uint8 values."""
    byte_view = packed.words.view(np.uint8).reshape(packed.rows, -1)
    bits = np.unpackbits(byte_view, axis=1, bitorder="little")
    return bits[:, : packed.dim_bits]


def unpack_signs(packed: PackedBinaryMatrix) -> np.ndarray:
    """(rows, dim_bits) float32 matrix of +1/-1 values."""
    return unpack_bits(packed).astype(np.float32) * 2.0 - 1.0


def packed_dot(a: np.ndarray, b: np.ndarray, dim_bits: int) -> int:
    """Dot product of two sign vectors given their packed rows.

    Uses the identity dim_bits - 2 * popcount(a XOR b); both rows must have
    zero pad bits for the identity to hold.
    """
    aw = np.asarray(a, dtype=np.uint64).ravel()
    bw = np.asarray(b, dtype=np.uint64).ravel()
    expect = _words_per_row(dim_bits)
    if aw.shape[0] != expect or bw.shape[0] != expect:
        raise DimensionMismatch(
            f"packed width mismatch: {aw.shape[0]} and {bw.shape[0]} words, expected {expect}"
        )
    hamming = int(np.bitwise_count(aw ^ bw).sum())
    return dim_bits - 2 * hamming


def _hamming_block(q_words: np.ndarray, d_words: np.ndarray) -> np.ndarray:
    # (m, W) x (r, W) -> (m, r) int64 Hamming distances
    xor = q_words[:, None, :] ^ d_words[None, :, :]
    return np.bitwise_count(xor).sum(axis=2, dtype=np.int64)


def maxsim_binary(
    query: TokenEmbeddingMatrix,
    passage: PackedBinaryMatrix,
    mode: str = "asymmetric",
) -> float:
    """MaxSim of a float query against a sign-binarized passage.

    asymmetric scores the raw float query rows against the passage signs
    (+1/-1); symmetric binarizes the query too and scores by packed_dot.
    """
    validate_query_matrix(query)
    if query.dim != passage.dim_bits:
        raise DimensionMismatch(f"query dim {query.dim} vs packed dim_bits {passage.dim_bits}")
    if passage.rows < 1:
        raise LateriError("empty packed passage")
    if mode == "asymmetric":
        signs = TokenEmbeddingMatrix(unpack_signs(passage))
        return float(maxsim_scores(query, [signs], SimilarityMetric.DOT)[0])
    if mode == "symmetric":
        q_packed = binarize(query)
        hamming = _hamming_block(q_packed.words, passage.words)
        sims = passage.dim_bits - 2 * hamming
        maxima = sims.max(axis=1)[:, None]
        return float(_ladder_sum(maxima)[0])
    raise LateriError(f"unknown binary scoring mode: {mode!r}")


def rerank_binary(
    query: TokenEmbeddingMatrix,
    candidates,
    index,
    mode: str = "asymmetric",
):
    """Rerank candidate ids from a packed-bit index; sort rule as in core."""
    validate_query_matrix(query)
    if not candidates:
        return []
    if getattr(index, "dtype", None) != "bit":
        raise LateriError("binary scoring requires a packed-bit index")
    scored = []
    for pid in candidates:
        packed = index.get_passage(pid)
        scored.append((pid, maxsim_binary(query, packed, mode)))
    return sort_candidates(scored)


@dataclass(frozen=True)
class StorageEstimate:
    """Payload size arithmetic for one (corpus, dim, dtype) configuration."""

    passage_count: int
    avg_tokens: float
    dim: int
    dtype: str
    payload_bytes: int
    bytes_per_vector: float
    baseline_dim: int
    baseline_ratio: float


def estimate_index_size(
    passage_count: int,
    avg_tokens: float,
    dim: int,
    dtype: str,
    baseline_dim: int | None = None,
) -> StorageEstimate:
    """Estimate index payload size and the ratio to an f32 baseline.

    payload_bytes = round(passage_count * avg_tokens) * bytes_per_vector,
    with 4 bytes/element (f32), 2 (f16) or 1/8 (bit). The baseline for the
    ratio is float32 at baseline_dim (defaults to the same dim).
    """
    if passage_count <= 0 or avg_tokens <= 0 or dim <= 0:
        raise LateriError("passage_count, avg_tokens and dim must be positive")
    if dtype not in BYTES_PER_VECTOR:
        raise LateriError(f"unknown dtype {dtype!r}, expected one of f32, f16, bit")
    if dtype == "bit" and dim % 8 != 0:
        raise LateriError("bit dtype requires dim to be a multiple of 8")
    if baseline_dim is None:
        baseline_dim = dim
    if baseline_dim <= 0:
        raise LateriError("baseline_dim must be positive")
    total_vectors = round(passage_count * avg_tokens)
    per_vector = dim * BYTES_PER_VECTOR[dtype]
    payload = int(total_vectors * per_vector)
    baseline = total_vectors * baseline_dim * 4
    return StorageEstimate(
        passage_count=passage_count,
        avg_tokens=avg_tokens,
        dim=dim,
        dtype=dtype,
        payload_bytes=payload,
        bytes_per_vector=per_vector,
        baseline_dim=baseline_dim,
        baseline_ratio=baseline / payload,
    )
