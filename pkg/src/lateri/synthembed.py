"""Deterministic synthetic token embedder for desk-scale tests and benches.

Each token gets a unit pseudo-random base vector derived from a 64-bit
FNV-1a hash of (seed, token bytes); context_mix blends in the mean of the
+-1 neighbor bases before re-normalizing, which is the smallest mechanism
that reproduces the qualitative same-word/different-word contextuality
ordering (and its inversion at high mix).
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import QUERY_ROWS, TokenEmbeddingMatrix
from .errors import LateriError

MASK_TOKEN = "[MASK]"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def _fnv1a64(data: bytes, state: int = _FNV_OFFSET) -> int:
    for byte in data:
        state ^= byte
        state = (state * _FNV_PRIME) & _MASK64
    return state


def token_hash(token: str, seed: int) -> int:
    """FNV-1a over the seed (8 LE bytes) then the token's UTF-8 bytes."""
    state = _fnv1a64(struct.pack("<Q", seed & _MASK64))
    return _fnv1a64(token.encode("utf-8"), state)


@dataclass(frozen=True)
class SynthConfig:
    dim: int
    seed: int = 0
    context_mix: float = 0.0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise LateriError(f"dim must be >= 1, got {self.dim}")
        if not 0.0 <= self.context_mix <= 1.0:
            raise LateriError(f"context_mix must be in [0, 1], got {self.context_mix}")


def _base_vector(token: str, cfg: SynthConfig) -> np.ndarray:
    rng = np.random.default_rng(token_hash(token, cfg.seed))
    v = rng.standard_normal(cfg.dim)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        v[0] = 1.0
        norm = 1.0
    return v / norm


def synth_embed(
    tokens: Sequence[str],
    cfg: SynthConfig,
    is_query: bool = False,
) -> TokenEmbeddingMatrix:
    """Embed a token sequence; queries are padded/truncated to 32 rows.

    Query padding uses the reserved "[MASK]" token string, mirroring how
    real encoders mask-augment short queries. Output rows are unit-norm.
    """
    toks = list(tokens)
    if not toks:
        raise LateriError("cannot embed an empty token list")
    if is_query:
        toks = toks[:QUERY_ROWS] + [MASK_TOKEN] * max(0, QUERY_ROWS - len(toks))
    cache: dict[str, np.ndarray] = {}
    for t in toks:
        if t not in cache:
            cache[t] = _base_vector(t, cfg)
    bases = np.stack([cache[t] for t in toks])
    n = len(toks)
    out = np.empty_like(bases)
    for i in range(n):
        neighbors = [j for j in (i - 1, i + 1) if 0 <= j < n]
        if neighbors:
            neighbor_mean = bases[neighbors].mean(axis=0)
        else:
            neighbor_mean = bases[i]
        row = (1.0 - cfg.context_mix) * bases[i] + cfg.context_mix * neighbor_mean
        norm = np.linalg.norm(row)
        if norm == 0.0:
            row = bases[i]
            norm = 1.0
        out[i] = row / norm
    return TokenEmbeddingMatrix(out.astype(np.float32), norm_state="l2_normalized")


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; adequate for synthetic fixtures and the CLI."""
    return re.findall(r"\w+", text.lower())


@dataclass(frozen=True)
class DiffHistogram:
    """Histogram of coordinatewise differences between two token vectors."""

    label: str
    bin_edges: np.ndarray
    counts: np.ndarray
    l2_norm: float

    def __post_init__(self) -> None:
        if len(self.bin_edges) != len(self.counts) + 1:
            raise LateriError("bin_edges must have one more entry than counts")


@dataclass(frozen=True)
class ContextualityReport:
    same_word_diff_sentence: DiffHistogram
    diff_word_same_sentence: DiffHistogram
    diff_word_diff_sentence: DiffHistogram

    @property
    def histograms(self) -> tuple[DiffHistogram, DiffHistogram, DiffHistogram]:
        return (
            self.same_word_diff_sentence,
            self.diff_word_same_sentence,
            self.diff_word_diff_sentence,
        )


def _histogram(diff: np.ndarray, label: str, bins: int) -> DiffHistogram:
    counts, edges = np.histogram(diff, bins=bins)
    return DiffHistogram(
        label=label,
        bin_edges=edges,
        counts=counts,
        l2_norm=float(np.linalg.norm(diff)),
    )


def _find(tokens: Sequence[str], word: str, where: str) -> int:
    try:
        return list(tokens).index(word)
    except ValueError:
        raise LateriError(f"word {word!r} not found in {where}") from None


def contextuality_analysis(
    sentence_a: Sequence[str],
    sentence_b: Sequence[str],
    shared_word: str,
    other_word: str,
    cfg: SynthConfig,
    bins: int = 40,
    embedder: Callable[[Sequence[str]], TokenEmbeddingMatrix] | None = None,
) -> ContextualityReport:
    """Embedding-difference histograms for a shared word across two contexts.

    Three comparisons: the shared word across the two sentences, a different
    word against the shared word within sentence A, and that different word
    against the shared word taken from sentence B. An external embedder
    (tokens -> TokenEmbeddingMatrix) may replace the synthetic one, so real
    encoder output can be analyzed the same way.
    """
    if other_word == shared_word:
        raise LateriError("other_word must differ from shared_word")
    if bins < 1:
        raise LateriError(f"bins must be >= 1, got {bins}")
    embed = embedder if embedder is not None else (lambda toks: synth_embed(toks, cfg))
    pos_shared_a = _find(sentence_a, shared_word, "sentence_a")
    pos_shared_b = _find(sentence_b, shared_word, "sentence_b")
    pos_other_a = _find(sentence_a, other_word, "sentence_a")
    emb_a = embed(sentence_a).as_float32()
    emb_b = embed(sentence_b).as_float32()
    shared_a = emb_a[pos_shared_a].astype(np.float64)
    shared_b = emb_b[pos_shared_b].astype(np.float64)
    other_a = emb_a[pos_other_a].astype(np.float64)
    return ContextualityReport(
        same_word_diff_sentence=_histogram(shared_a - shared_b, "same_word_diff_sentence", bins),
        diff_word_same_sentence=_histogram(other_a - shared_a, "diff_word_same_sentence", bins),
        diff_word_diff_sentence=_histogram(other_a - shared_b, "diff_word_diff_sentence", bins),
    )


def report_to_delimited(report: ContextualityReport, sep: str = "\t") -> str:
    """Histogram rows as delimiter-separated values for external plotting."""
    lines = [sep.join(("label", "bin_lo", "bin_hi", "count"))]
    for hist in report.histograms:
        for lo, hi, count in zip(hist.bin_edges[:-1], hist.bin_edges[1:], hist.counts):
            lines.append(sep.join((hist.label, f"{lo:.9g}", f"{hi:.9g}", str(int(count)))))
    return "\n".join(lines) + "\n"
