"""TREC-style evaluation: qrels and run file parsing, nDCG@k and MRR@k.

File contracts: qrels lines are "qid iter pid grade", run lines are
"qid Q0 pid rank score tag"; both whitespace-separated, UTF-8, LF line
endings. nDCG uses the trec_eval convention (gain 2^g - 1, discount
log2(i + 1)), with the ideal DCG taken over all judged passages of the
query, not just the retrieved ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import ScoredCandidate
from .errors import FormatError

DEFAULT_K = 10


class Qrels:
    """Relevance judgments: (query_id, passage_id) -> integer grade >= 0."""

    def __init__(self) -> None:
        self._grades: dict[str, dict[str, int]] = {}

    def add(self, query_id: str, passage_id: str, grade: int) -> None:
        per_query = self._grades.setdefault(query_id, {})
        existing = per_query.get(passage_id)
        if existing is not None and existing != grade:
            raise FormatError(
                f"conflicting grade for ({query_id}, {passage_id}): {existing} vs {grade}"
            )
        per_query[passage_id] = grade

    def grade(self, query_id: str, passage_id: str) -> int:
        return self._grades.get(query_id, {}).get(passage_id, 0)

    def judged(self, query_id: str) -> dict[str, int]:
        return dict(self._grades.get(query_id, {}))

    def queries(self) -> list[str]:
        return sorted(self._grades)

    def has_relevant(self, query_id: str, threshold: int = 1) -> bool:
        return any(g >= threshold for g in self._grades.get(query_id, {}).values())

    def __len__(self) -> int:
        return sum(len(v) for v in self._grades.values())

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._grades


@dataclass
class CandidateSet:
    """Per-query ordered candidate lists (source/bm25 rank order)."""

    lists: dict[str, list[str]] = field(default_factory=dict)

    def queries(self) -> list[str]:
        return sorted(self.lists)

    def for_query(self, query_id: str) -> list[str]:
        return self.lists[query_id]


@dataclass(frozen=True)
class RunRow:
    query_id: str
    passage_id: str
    rank: int
    score: float
    tag: str


@dataclass
class RunFile:
    rows: list[RunRow] = field(default_factory=list)

    def queries(self) -> list[str]:
        return sorted({r.query_id for r in self.rows})

    def ranking(self, query_id: str) -> list[str]:
        mine = [r for r in self.rows if r.query_id == query_id]
        mine.sort(key=lambda r: r.rank)
        return [r.passage_id for r in mine]


def parse_qrels(path: str | Path) -> Qrels:
    """Parse a qrels file; conflicting duplicate grades are an error."""
    qrels = Qrels()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _iteration, pid, grade_text = parts
            try:
                grade = int(grade_text)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: grade {grade_text!r} is not an integer") from None
            if grade < 0:
                raise FormatError(f"{path}:{lineno}: negative grade {grade}")
            try:
                qrels.add(qid, pid, grade)
            except FormatError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return qrels


def _parse_run_rows(path: str | Path) -> list[RunRow]:
    rows: list[RunRow] = []
    seen: set[tuple[str, str]] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            qid, _q0, pid, rank_text, score_text, tag = parts
            try:
                rank = int(rank_text)
                score = float(score_text)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad rank/score field") from None
            if (qid, pid) in seen:
                raise FormatError(f"{path}:{lineno}: duplicate entry for ({qid}, {pid})")
            seen.add((qid, pid))
            rows.append(RunRow(query_id=qid, passage_id=pid, rank=rank, score=score, tag=tag))
    return rows


def parse_run(path: str | Path) -> RunFile:
    """Parse a TREC run file."""
    return RunFile(rows=_parse_run_rows(path))


def parse_candidates(path: str | Path) -> CandidateSet:
    """Parse a TREC run file into per-query candidate lists in rank order."""
    per_query: dict[str, list[tuple[int, str]]] = {}
    for row in _parse_run_rows(path):
        per_query.setdefault(row.query_id, []).append((row.rank, row.passage_id))
    lists = {
        qid: [pid for _, pid in sorted(entries, key=lambda e: e[0])]
        for qid, entries in per_query.items()
    }
    return CandidateSet(lists=lists)


def write_run(
    results: Mapping[str, Sequence[ScoredCandidate]],
    tag: str,
    path: str | Path,
) -> Path:
    """Write ranked results as a TREC run file.

    Queries are emitted in ascending (bytewise) query-id order and scores
    are printed with six decimal places so round-trips are byte-stable.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for qid in sorted(results, key=lambda q: q.encode("utf-8")):
            for cand in results[qid]:
                fh.write(f"{qid} Q0 {cand.passage_id} {cand.rank} {cand.score:.6f} {tag}\n")
    return path


def _dcg(grades: Sequence[int]) -> float:
    return sum((2**g - 1) / math.log2(i + 2) for i, g in enumerate(grades))


def ndcg_at_k(ranking: Sequence[str], judgments: Mapping[str, int], k: int) -> float:
    """nDCG@k of a ranking against one query's judgments.

    Unjudged passages count as grade 0; the ideal DCG ranks all judged
    passages of the query. Returns 0.0 when the query has no relevant
    judgments (callers exclude such queries from means).
    """
    if k < 1:
        raise FormatError(f"k must be >= 1, got {k}")
    gains = [judgments.get(pid, 0) for pid in ranking[:k]]
    ideal = sorted(judgments.values(), reverse=True)[:k]
    idcg = _dcg(ideal)
    if idcg == 0.0:
        return 0.0
    return _dcg(gains) / idcg


def mrr_at_k(
    ranking: Sequence[str],
    judgments: Mapping[str, int],
    k: int,
    positive_threshold: int = 1,
) -> float:
    """Reciprocal rank of the first passage with grade >= threshold in top k."""
    if k < 1:
        raise FormatError(f"k must be >= 1, got {k}")
    for i, pid in enumerate(ranking[:k], start=1):
        if judgments.get(pid, 0) >= positive_threshold:
            return 1.0 / i
    return 0.0


@dataclass
class QueryMetrics:
    ndcg: float
    mrr: float
    has_relevant: bool


@dataclass
class MetricReport:
    """Per-query and mean nDCG@k / MRR@k for one run."""

    k: int
    per_query: dict[str, QueryMetrics] = field(default_factory=dict)
    mean_ndcg: float = 0.0
    mean_mrr: float = 0.0
    evaluated_queries: int = 0
    excluded_queries: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [
            f"queries evaluated: {self.evaluated_queries}",
            f"queries excluded (no relevant judgments): {len(self.excluded_queries)}",
            f"ndcg@{self.k}: {self.mean_ndcg:.6f}",
            f"mrr@{self.k}: {self.mean_mrr:.6f}",
        ]
        if self.warnings:
            lines.append(f"warnings: {len(self.warnings)}")
        return "\n".join(lines)


def evaluate_run(
    run: RunFile,
    qrels: Qrels,
    k: int = DEFAULT_K,
    positive_threshold: int = 1,
) -> MetricReport:
    """Score a run against qrels; means are over queries with judgments.

    Queries present on only one side produce warnings: run queries missing
    from the qrels are skipped, and judged queries missing from the run are
    reported but (having no ranking) contribute nothing.
    """
    report = MetricReport(k=k)
    run_queries = run.queries()
    rankings = {qid: run.ranking(qid) for qid in run_queries}
    for qid in qrels.queries():
        if qid not in rankings:
            report.warnings.append(f"query {qid} in qrels but not in run")
    ndcg_values: list[float] = []
    mrr_values: list[float] = []
    for qid in run_queries:
        if qid not in qrels:
            report.warnings.append(f"query {qid} in run but not in qrels")
            continue
        judgments = qrels.judged(qid)
        metrics = QueryMetrics(
            ndcg=ndcg_at_k(rankings[qid], judgments, k),
            mrr=mrr_at_k(rankings[qid], judgments, k, positive_threshold),
            # exclusion from the means keys off any positive grade (IDCG = 0),
            # independent of the MRR positive threshold
            has_relevant=qrels.has_relevant(qid, 1),
        )
        report.per_query[qid] = metrics
        if metrics.has_relevant:
            ndcg_values.append(metrics.ndcg)
            mrr_values.append(metrics.mrr)
        else:
            report.excluded_queries.append(qid)
    report.evaluated_queries = len(ndcg_values)
    if ndcg_values:
        report.mean_ndcg = sum(ndcg_values) / len(ndcg_values)
        report.mean_mrr = sum(mrr_values) / len(mrr_values)
    return report
