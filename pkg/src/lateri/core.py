"""Dense similarity kernels and the MaxSim late-interaction ranker.

Scoring is late interaction: queries and passages are encoded independently
(elsewhere) into per-token embedding matrices, and relevance is the sum over
query tokens of the maximum similarity against any passage token.

Numeric contract: storage may be float16 or float32, arithmetic is float32,
and the final sum over the 32 per-query-token maxima is accumulated in
ascending row order into a float64 accumulator. Scores are bitwise invariant
under passage-row and candidate permutations and deterministic run to run;
the regression tests rely on both.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, LateriError

QUERY_ROWS = 32
UNIT_NORM_TOL = 1e-3

_STORAGE_DTYPES = (np.float16, np.float32)


class SimilarityMetric(Enum):
    """Vector similarity; all variants are oriented so larger is better."""

    NEG_L2_SQUARED = "neg_l2_squared"
    DOT = "dot"
    COSINE = "cosine"

    @classmethod
    def from_string(cls, name: str) -> "SimilarityMetric":
        aliases = {
            "l2": cls.NEG_L2_SQUARED,
            "neg_l2_squared": cls.NEG_L2_SQUARED,
            "dot": cls.DOT,
            "cosine": cls.COSINE,
        }
        try:
            return aliases[name.lower()]
        except KeyError:
            raise LateriError(f"unknown similarity metric: {name!r}") from None


@dataclass(frozen=True)
class TokenEmbeddingMatrix:
    """Per-text matrix of token vectors, one row per token.

    values is (rows, dim), float16 or float32 (anything else is cast to
    float32). norm_state = "l2_normalized" asserts every row has unit
    Euclidean norm within 1e-3 and is verified at construction.
    """

    values: np.ndarray
    norm_state: str = "raw"

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise LateriError(f"token matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise LateriError(f"token matrix must be at least 1x1, got shape {arr.shape}")
        if arr.dtype not in _STORAGE_DTYPES:
            arr = arr.astype(np.float32)
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if self.norm_state not in ("raw", "l2_normalized"):
            raise LateriError(f"invalid norm_state: {self.norm_state!r}")
        if self.norm_state == "l2_normalized":
            norms = np.linalg.norm(self.as_float32(), axis=1)
            if not np.all(np.abs(norms - 1.0) <= UNIT_NORM_TOL):
                worst = float(np.max(np.abs(norms - 1.0)))
                raise LateriError(
                    f"norm_state=l2_normalized but a row norm deviates by {worst:.2e}"
                )

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def as_float32(self) -> np.ndarray:
        """Widen half-precision storage; float32 passes through unchanged."""
        if self.values.dtype == np.float32:
            return self.values
        return self.values.astype(np.float32)


@dataclass(frozen=True)
class ScoredCandidate:
    """One entry of a ranked result list; rank is 1-based."""

    passage_id: str
    score: float
    rank: int


def validate_query_matrix(matrix: TokenEmbeddingMatrix) -> TokenEmbeddingMatrix:
    """Pass through a query matrix, rejecting anything without exactly 32 rows.

    Padding short queries with mask-token embeddings is the encoder's job;
    the engine only enforces the contract.
    """
    if matrix.rows != QUERY_ROWS:
        raise LateriError(f"expected {QUERY_ROWS} query rows, got {matrix.rows}")
    return matrix


def _as_vector(v: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(v)
    if arr.ndim != 1:
        raise LateriError(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.dtype != np.float32:
        arr = arr.astype(np.float32)
    return arr


def _check_unit(v: np.ndarray, what: str) -> None:
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise LateriError(f"cosine requires l2-normalized input; {what} has norm {norm:.6f}")


def similarity(
    u: Sequence[float] | np.ndarray,
    v: Sequence[float] | np.ndarray,
    metric: SimilarityMetric,
) -> float:
    """Similarity between two vectors under the given metric.

    neg_l2_squared returns -sum((u-v)^2) so that larger is better across all
    metrics; cosine additionally requires both operands to be unit vectors.
    """
    a = _as_vector(u)
    b = _as_vector(v)
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"vector widths differ: {a.shape[0]} vs {b.shape[0]}")
    if metric is SimilarityMetric.COSINE:
        _check_unit(a, "first operand")
        _check_unit(b, "second operand")
        return float(np.dot(a, b))
    if metric is SimilarityMetric.DOT:
        return float(np.dot(a, b))
    diff = a - b
    return -float(np.dot(diff, diff))


def _require_unit_stacked(stacked: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(stacked, axis=1)
    bad = np.abs(norms - 1.0) > UNIT_NORM_TOL
    if np.any(bad):
        row = int(np.argmax(bad))
        raise LateriError(
            f"cosine requires l2-normalized rows; {what} row {row} has norm {norms[row]:.6f}"
        )


def _require_unit_rows(matrix: TokenEmbeddingMatrix, what: str) -> None:
    if matrix.norm_state == "l2_normalized":
        return
    _require_unit_stacked(matrix.as_float32(), what)


def _sim_block(q: np.ndarray, docs: np.ndarray, metric: SimilarityMetric) -> np.ndarray:
    """(32, dim) x (R, dim) -> (32, R) similarity matrix, float32 arithmetic."""
    if metric in (SimilarityMetric.DOT, SimilarityMetric.COSINE):
        return q @ docs.T
    # neg_l2_squared is computed from the literal differences, not the
    # expanded dot-product identity: (u - u) is exactly zero, so self-matches
    # score exactly 0.0 and the max-over-v bound holds without rounding slop.
    out = np.empty((q.shape[0], docs.shape[0]), dtype=np.float32)
    diff = np.empty_like(docs)
    for i in range(q.shape[0]):
        np.subtract(docs, q[i], out=diff)
        out[i] = -np.einsum("rd,rd->r", diff, diff)
    return out


def _ladder_sum(maxima: np.ndarray) -> np.ndarray:
    """Sum per-query-row maxima in ascending row order with float64 adds.

    maxima is (QUERY_ROWS, n); returns (n,) float64. The fixed sequential
    order makes the result identical whether candidates are scored one at a
    time or in a batch.
    """
    acc = np.zeros(maxima.shape[1], dtype=np.float64)
    wide = maxima.astype(np.float64)
    for i in range(wide.shape[0]):
        acc += wide[i]
    return acc


def _scores_from_stacked(
    q: np.ndarray,
    stacked: np.ndarray,
    rows: Sequence[int],
    metric: SimilarityMetric,
) -> np.ndarray:
    sims = _sim_block(q, stacked, metric)
    starts = np.cumsum([0] + list(rows[:-1]), dtype=np.intp)
    maxima = np.maximum.reduceat(sims, starts, axis=1)
    return _ladder_sum(maxima)


def maxsim_scores(
    query: TokenEmbeddingMatrix,
    passages: Iterable[TokenEmbeddingMatrix],
    metric: SimilarityMetric,
) -> np.ndarray:
    """MaxSim scores of one query against many passages (float64 array).

    All passage matrices are stacked into a single similarity computation;
    per-passage maxima are then taken over each passage's row segment.
    """
    validate_query_matrix(query)
    mats = list(passages)
    if not mats:
        return np.zeros(0, dtype=np.float64)
    q = query.as_float32()
    for m in mats:
        if m.dim != query.dim:
            raise DimensionMismatch(f"query dim {query.dim} vs passage dim {m.dim}")
        if m.rows < 1:
            raise LateriError("empty passage matrix")
    if metric is SimilarityMetric.COSINE:
        _require_unit_rows(query, "query")
        for m in mats:
            _require_unit_rows(m, "passage")
    stacked = np.vstack([m.as_float32() for m in mats])
    return _scores_from_stacked(q, stacked, [m.rows for m in mats], metric)


def maxsim_score(
    query: TokenEmbeddingMatrix,
    passage: TokenEmbeddingMatrix,
    metric: SimilarityMetric,
) -> float:
    """Sum over the 32 query rows of the max similarity to any passage row."""
    return float(maxsim_scores(query, [passage], metric)[0])


def sort_candidates(scored: Iterable[tuple[str, float]]) -> list[ScoredCandidate]:
    """Order (passage_id, score) pairs by score descending, id ascending."""
    ordered = sorted(scored, key=lambda item: (-item[1], item[0]))
    return [
        ScoredCandidate(passage_id=pid, score=score, rank=i + 1)
        for i, (pid, score) in enumerate(ordered)
    ]


def rerank(
    query: TokenEmbeddingMatrix,
    candidates: Sequence[str],
    index,
    metric: SimilarityMetric,
) -> list[ScoredCandidate]:
    """Rerank candidate passage ids from a dense index by MaxSim score.

    The output is a permutation of the input ids, invariant under input
    order; ties break by ascending passage_id. Packed-bit indexes are
    rejected here (they are scored through the quantize module).
    """
    validate_query_matrix(query)
    if not candidates:
        return []
    if getattr(index, "dtype", None) == "bit":
        raise LateriError("index holds packed-bit records; use binary MaxSim scoring")
    stack = getattr(index, "stack_passages", None)
    if stack is not None:
        # bulk fetch straight out of the index: one copy, no per-record wrappers
        stacked, rows = stack(candidates)
        if stacked.shape[1] != query.dim:
            raise DimensionMismatch(f"query dim {query.dim} vs index dim {stacked.shape[1]}")
        if metric is SimilarityMetric.COSINE:
            _require_unit_rows(query, "query")
            _require_unit_stacked(stacked, "passage")
        scores = _scores_from_stacked(query.as_float32(), stacked, rows, metric)
    else:
        mats = [index.get_passage(pid) for pid in candidates]
        scores = maxsim_scores(query, mats, metric)
    return sort_candidates(zip(candidates, scores.tolist()))
