"""Poly-encoder scoring: m learned code vectors attend over query tokens,
and a single candidate vector attends over the resulting context rows.

Ranking each candidate costs one m-way attention plus two dot products, so
a passage is represented by one vector and the per-query work (code
attention) is shared across every candidate. Attention arithmetic runs in
float64; softmax uses max-subtraction so dim-768 logits cannot overflow.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ScoredCandidate, TokenEmbeddingMatrix, sort_candidates
from .errors import DimensionMismatch, LateriError

CODES_RECORD_ID = "polycodes"


@dataclass(frozen=True)
class PolyCodes:
    """Learned code embeddings, one row per code."""

    weights: np.ndarray  # (m, dim)

    def __post_init__(self) -> None:
        arr = np.asarray(self.weights, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise LateriError(f"codes must be a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise LateriError("codes contain non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class PassageVector:
    """Single-vector passage representation used by poly-encoder ranking."""

    values: np.ndarray  # (dim,)

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise LateriError(f"passage vector must be 1-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def attend_codes(tokens: TokenEmbeddingMatrix, codes: PolyCodes) -> np.ndarray:
    """Context matrix (m, dim): code i attends softmax(c_i . t_j) over tokens.

    Every output row is a convex combination of token rows.
    """
    if tokens.dim != codes.dim:
        raise DimensionMismatch(f"token dim {tokens.dim} vs code dim {codes.dim}")
    toks = tokens.as_float32().astype(np.float64)
    logits = codes.weights @ toks.T  # (m, rows)
    weights = _softmax(logits, axis=1)
    return weights @ toks


def poly_score(context: np.ndarray, candidate: PassageVector) -> float:
    """Score = (softmax-weighted mix of context rows) . candidate."""
    ctx = np.asarray(context, dtype=np.float64)
    if ctx.ndim != 2:
        raise LateriError(f"context must be 2-D, got shape {ctx.shape}")
    if ctx.shape[1] != candidate.dim:
        raise DimensionMismatch(f"context dim {ctx.shape[1]} vs candidate dim {candidate.dim}")
    logits = ctx @ candidate.values  # (m,)
    weights = _softmax(logits, axis=0)
    query_vector = weights @ ctx
    return float(query_vector @ candidate.values)


def _candidate_vector(record, pid: str, dim: int, normalize: bool) -> PassageVector:
    if not isinstance(record, TokenEmbeddingMatrix):
        raise LateriError("poly-encoder ranking requires a dense index")
    if record.rows != 1:
        raise LateriError(f"record {pid!r} has {record.rows} rows, poly index records must have 1")
    if record.dim != dim:
        raise DimensionMismatch(f"record {pid!r} dim {record.dim} vs codes dim {dim}")
    vec = record.as_float32().astype(np.float64)[0]
    if normalize:
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise LateriError(f"record {pid!r} is a zero vector, cannot normalize")
        vec = vec / norm
    return PassageVector(vec)


def rerank_with_context(
    context: np.ndarray,
    candidates: Sequence[str],
    index,
    normalize_candidate: bool = False,
) -> list[ScoredCandidate]:
    """Rerank candidates against an already-computed context matrix."""
    if not len(candidates):
        return []
    ctx = np.asarray(context, dtype=np.float64)
    dim = ctx.shape[1]
    vectors = np.stack(
        [
            _candidate_vector(index.get_passage(pid), pid, dim, normalize_candidate).values
            for pid in candidates
        ]
    )
    logits = vectors @ ctx.T  # (n, m)
    weights = _softmax(logits, axis=1)
    mixed = weights @ ctx  # (n, dim)
    scores = np.einsum("nd,nd->n", mixed, vectors)
    return sort_candidates(zip(candidates, scores.tolist()))


def poly_rerank(
    tokens: TokenEmbeddingMatrix,
    codes: PolyCodes,
    candidates: Sequence[str],
    index,
    normalize_candidate: bool = False,
) -> list[ScoredCandidate]:
    """Rerank candidates by poly-encoder score; sort rule as in core.rerank.

    Code attention runs once per query and is reused for every candidate.
    """
    if not len(candidates):
        return []
    context = attend_codes(tokens, codes)
    return rerank_with_context(context, candidates, index, normalize_candidate)


def random_codes(m: int, dim: int, seed: int = 0) -> PolyCodes:
    """Seeded pseudo-random codes; stands in for trained weights in tests."""
    if m < 1 or dim < 1:
        raise LateriError("m and dim must be positive")
    rng = np.random.default_rng(seed)
    return PolyCodes(weights=rng.standard_normal((m, dim)) / np.sqrt(dim))


def load_codes(path: str | Path, record_id: str = CODES_RECORD_ID) -> PolyCodes:
    """Load code weights from a shard; the record id is "polycodes"."""
    from .index import read_shard

    shard = read_shard(path)
    for pid, values in shard.records:
        if pid == record_id:
            return PolyCodes(weights=values)
    raise LateriError(f"no {record_id!r} record in {path}")
