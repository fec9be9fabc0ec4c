"""Latency/throughput harness for the ranking stage.

Measures ms/query over a fixed candidate count with all embeddings already
resident (index load and parsing are outside the timed region), split into
query preparation and ranking stages. Candidate sampling and query order
are a pure function of the seed; medians are the headline statistic since
desk hardware is noisy.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import TokenEmbeddingMatrix
from .errors import LateriError
from .synthembed import SynthConfig, synth_embed

DEFAULT_CANDIDATES = 1000
DEFAULT_WARMUP = 3

StageCallback = Callable[[str, int, str, float, bool], None]
# (stage, repeat_index, query_id, ms, is_warmup)


@dataclass(frozen=True)
class StageStats:
    median_ms: float
    p95_ms: float
    samples: int

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "StageStats":
        arr = np.asarray(samples, dtype=np.float64)
        return cls(
            median_ms=float(np.median(arr)),
            p95_ms=float(np.percentile(arr, 95)),
            samples=len(samples),
        )


@dataclass(frozen=True)
class LatencyReport:
    scorer: str
    candidate_count: int
    repeats: int
    warmup_count: int
    thread_count: int
    index_dtype: str
    index_dim: int
    query_prep: StageStats
    rank: StageStats

    def to_records(self) -> list[str]:
        """Line-delimited key=value records, one group per stage."""
        common = (
            f"scorer={self.scorer} candidates={self.candidate_count} "
            f"repeats={self.repeats} warmup={self.warmup_count} "
            f"threads={self.thread_count} dtype={self.index_dtype} dim={self.index_dim}"
        )
        return [
            f"stage=query_prep median_ms={self.query_prep.median_ms:.3f} "
            f"p95_ms={self.query_prep.p95_ms:.3f} samples={self.query_prep.samples} {common}",
            f"stage=rank median_ms={self.rank.median_ms:.3f} "
            f"p95_ms={self.rank.p95_ms:.3f} samples={self.rank.samples} {common}",
        ]

    def summary_table(self) -> str:
        header = (
            f"scorer={self.scorer} dtype={self.index_dtype} dim={self.index_dim} "
            f"candidates={self.candidate_count} threads={self.thread_count}"
        )
        rows = [
            ("stage", "median ms", "p95 ms", "samples"),
            ("query_prep", f"{self.query_prep.median_ms:.3f}", f"{self.query_prep.p95_ms:.3f}", str(self.query_prep.samples)),
            ("rank", f"{self.rank.median_ms:.3f}", f"{self.rank.p95_ms:.3f}", str(self.rank.samples)),
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = [header]
        for r in rows:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)))
        return "\n".join(lines)


def sample_workload(
    index,
    query_ids: Sequence[str],
    candidate_count: int,
    seed: int,
) -> tuple[list[int], dict[str, list[str]]]:
    """Deterministic query order and per-query candidate samples.

    Returns (query order as indices into query_ids, qid -> candidate ids).
    """
    all_ids = index.ids()
    if len(all_ids) < candidate_count:
        raise LateriError(
            f"index has {len(all_ids)} passages, need at least {candidate_count}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(query_ids)).tolist()
    candidates = {}
    for qid in query_ids:
        picks = rng.choice(len(all_ids), size=candidate_count, replace=False)
        candidates[qid] = [all_ids[i] for i in picks]
    return order, candidates


def bench_rank(
    index,
    queries: Sequence[tuple[str, TokenEmbeddingMatrix]],
    scorer,
    candidate_count: int = DEFAULT_CANDIDATES,
    repeats: int = 5,
    warmup: int = DEFAULT_WARMUP,
    seed: int = 0,
    threads: int = 1,
    candidates: dict[str, list[str]] | None = None,
    stage_callback: StageCallback | None = None,
) -> LatencyReport:
    """Time query preparation and ranking per query over repeated passes.

    Only prepare() and rank() fall inside the timed regions; the index is
    pre-loaded and queries are pre-parsed by contract. When candidates is
    None they are sampled from the index deterministically by seed.
    """
    if candidate_count < 1:
        raise LateriError(f"candidate_count must be >= 1, got {candidate_count}")
    if repeats < 1:
        raise LateriError(f"repeats must be >= 1, got {repeats}")
    if warmup < 0:
        raise LateriError(f"warmup must be >= 0, got {warmup}")
    if not queries:
        raise LateriError("no queries to benchmark")
    if threads < 1:
        raise LateriError(f"threads must be >= 1, got {threads}")

    qids = [qid for qid, _ in queries]
    order, sampled = sample_workload(index, qids, candidate_count, seed)
    if candidates is not None:
        sampled = candidates
        for qid in qids:
            if len(sampled.get(qid, ())) != candidate_count:
                raise LateriError(f"query {qid}: expected {candidate_count} candidates")

    prep_samples: list[float] = []
    rank_samples: list[float] = []

    def run_one(repeat: int, position: int, is_warmup: bool) -> tuple[float, float]:
        qid, matrix = queries[position]
        cand = sampled[qid]
        t0 = time.perf_counter()
        prepared = scorer.prepare(matrix)
        t1 = time.perf_counter()
        scorer.rank(prepared, cand)
        t2 = time.perf_counter()
        prep_ms = (t1 - t0) * 1e3
        rank_ms = (t2 - t1) * 1e3
        if stage_callback is not None:
            stage_callback("query_prep", repeat, qid, prep_ms, is_warmup)
            stage_callback("rank", repeat, qid, rank_ms, is_warmup)
        return prep_ms, rank_ms

    for repeat in range(warmup + repeats):
        is_warmup = repeat < warmup
        if threads == 1:
            timings = [run_one(repeat, pos, is_warmup) for pos in order]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                timings = list(pool.map(lambda pos: run_one(repeat, pos, is_warmup), order))
        if not is_warmup:
            for prep_ms, rank_ms in timings:
                prep_samples.append(prep_ms)
                rank_samples.append(rank_ms)

    return LatencyReport(
        scorer=getattr(scorer, "name", type(scorer).__name__),
        candidate_count=candidate_count,
        repeats=repeats,
        warmup_count=warmup,
        thread_count=threads,
        index_dtype=getattr(index, "dtype", "?"),
        index_dim=getattr(index, "dim", 0),
        query_prep=StageStats.from_samples(prep_samples),
        rank=StageStats.from_samples(rank_samples),
    )


def bench_vectorize(
    embedder: SynthConfig | Callable[[Sequence[str]], TokenEmbeddingMatrix],
    passages: Sequence[Sequence[str]],
    repeats: int,
    warmup: int = DEFAULT_WARMUP,
) -> float:
    """Median ms/passage to embed the passage set, over post-warmup repeats."""
    if not passages:
        raise LateriError("empty passage set")
    if repeats < 1:
        raise LateriError(f"repeats must be >= 1, got {repeats}")
    if isinstance(embedder, SynthConfig):
        cfg = embedder
        embed = lambda toks: synth_embed(toks, cfg)  # noqa: E731
    else:
        embed = embedder
    per_repeat: list[float] = []
    for repeat in range(warmup + repeats):
        t0 = time.perf_counter()
        for tokens in passages:
            embed(tokens)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        if repeat >= warmup:
            per_repeat.append(elapsed_ms / len(passages))
    return float(np.median(per_repeat))


def throughput_report(report: LatencyReport) -> float:
    """Queries/second implied by the medians, assuming ideal thread scaling."""
    total_ms = report.query_prep.median_ms + report.rank.median_ms
    if total_ms <= 0.0:
        raise LateriError("median latency is zero; cannot derive throughput")
    return 1000.0 / total_ms * report.thread_count
