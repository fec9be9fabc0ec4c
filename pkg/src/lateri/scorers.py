"""Scorer families over a loaded index: thin wiring used by cli and bench.

A scorer splits work into prepare(query) — everything done once per query,
e.g. poly-encoder code attention — and rank(prepared, candidate_ids).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import core, polyenc, quantize
from .core import ScoredCandidate, SimilarityMetric, TokenEmbeddingMatrix
from .errors import LateriError

FAMILIES = ("maxsim", "maxsim-binary", "poly")


@dataclass(frozen=True)
class ScorerConfig:
    family: str = "maxsim"
    metric: SimilarityMetric = SimilarityMetric.NEG_L2_SQUARED
    mode: str = "asymmetric"  # binary scoring only
    codes: polyenc.PolyCodes | None = None  # poly only
    normalize_candidate: bool = False  # poly only

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise LateriError(f"unknown scorer family {self.family!r}")
        if self.family == "poly" and self.codes is None:
            raise LateriError("poly scorer requires codes")


class MaxSimScorer:
    name = "maxsim"

    def __init__(self, index, metric: SimilarityMetric):
        if index.dtype == "bit":
            raise LateriError("maxsim scorer needs a dense index; use maxsim-binary")
        self.index = index
        self.metric = metric

    def prepare(self, query: TokenEmbeddingMatrix) -> TokenEmbeddingMatrix:
        return core.validate_query_matrix(query)

    def rank(self, prepared: TokenEmbeddingMatrix, candidates: Sequence[str]) -> list[ScoredCandidate]:
        return core.rerank(prepared, candidates, self.index, self.metric)


class BinaryMaxSimScorer:
    name = "maxsim-binary"

    def __init__(self, index, mode: str):
        if index.dtype != "bit":
            raise LateriError("maxsim-binary scorer needs a packed-bit index")
        self.index = index
        self.mode = mode

    def prepare(self, query: TokenEmbeddingMatrix) -> TokenEmbeddingMatrix:
        return core.validate_query_matrix(query)

    def rank(self, prepared: TokenEmbeddingMatrix, candidates: Sequence[str]) -> list[ScoredCandidate]:
        return quantize.rerank_binary(prepared, candidates, self.index, self.mode)


class PolyScorer:
    name = "poly"

    def __init__(self, index, codes: polyenc.PolyCodes, normalize_candidate: bool = False):
        if index.dtype == "bit":
            raise LateriError("poly scorer needs a dense index")
        self.index = index
        self.codes = codes
        self.normalize_candidate = normalize_candidate

    def prepare(self, query: TokenEmbeddingMatrix):
        # code attention happens once per query; candidates reuse the context
        return polyenc.attend_codes(query, self.codes)

    def rank(self, context, candidates: Sequence[str]) -> list[ScoredCandidate]:
        return polyenc.rerank_with_context(
            context, candidates, self.index, self.normalize_candidate
        )


def make_scorer(config: ScorerConfig, index):
    if config.family == "maxsim":
        return MaxSimScorer(index, config.metric)
    if config.family == "maxsim-binary":
        return BinaryMaxSimScorer(index, config.mode)
    return PolyScorer(index, config.codes, config.normalize_candidate)
