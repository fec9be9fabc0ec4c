import numpy as np
import pytest

from lateri import (
    FormatError,
    ScoredCandidate,
    evaluate_run,
    mrr_at_k,
    ndcg_at_k,
    parse_candidates,
    parse_qrels,
    parse_run,
    write_run,
)
from lateri.evaluation import Qrels, RunFile, RunRow
from oracles import naive_mrr_at_k, naive_ndcg_at_k


class TestParseQrels:
    def test_two_lines(self, tmp_path):
        p = tmp_path / "q"
        p.write_text("1 0 d1 2\n1 0 d2 0\n")
        qrels = parse_qrels(p)
        assert qrels.grade("1", "d1") == 2
        assert qrels.grade("1", "d2") == 0
        assert len(qrels) == 2

    def test_empty_file(self, tmp_path):
        p = tmp_path / "q"
        p.write_text("")
        assert len(parse_qrels(p)) == 0

    def test_conflicting_grade(self, tmp_path):
        p = tmp_path / "q"
        p.write_text("1 0 d1 2\n1 0 d1 3\n")
        with pytest.raises(FormatError, match="conflicting grade"):
            parse_qrels(p)

    def test_duplicate_same_grade_is_fine(self, tmp_path):
        p = tmp_path / "q"
        p.write_text("1 0 d1 2\n1 0 d1 2\n")
        assert parse_qrels(p).grade("1", "d1") == 2

    def test_malformed_line_reports_lineno(self, tmp_path):
        p = tmp_path / "q"
        p.write_text("1 0 d1 2\n1 0 d1\n")
        with pytest.raises(FormatError, match=":2:"):
            parse_qrels(p)

    def test_negative_grade_rejected(self, tmp_path):
        p = tmp_path / "q"
        p.write_text("1 0 d1 -1\n")
        with pytest.raises(FormatError, match="negative"):
            parse_qrels(p)


class TestRunIO:
    def test_parse_two_rows(self, tmp_path):
        p = tmp_path / "r"
        p.write_text("7 Q0 d2 1 3.500000 tagx\n7 Q0 d9 2 1.250000 tagx\n")
        run = parse_run(p)
        assert run.ranking("7") == ["d2", "d9"]

    def test_candidates_rank_order(self, tmp_path):
        p = tmp_path / "r"
        p.write_text("7 Q0 d9 2 1.0 t\n7 Q0 d2 1 3.0 t\n")
        cands = parse_candidates(p)
        assert cands.for_query("7") == ["d2", "d9"]

    def test_duplicate_pid_rejected(self, tmp_path):
        p = tmp_path / "r"
        p.write_text("7 Q0 d2 1 3.0 t\n7 Q0 d2 2 1.0 t\n")
        with pytest.raises(FormatError, match="duplicate"):
            parse_run(p)

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "r"
        p.write_text("7 Q0 d2 one 3.0 t\n")
        with pytest.raises(FormatError, match="rank/score"):
            parse_run(p)

    def test_write_two_candidates(self, tmp_path):
        out = tmp_path / "run"
        write_run(
            {"q1": [ScoredCandidate("d5", 2.25, 1), ScoredCandidate("d1", 1.0, 2)]},
            "trial",
            out,
        )
        assert out.read_text() == "q1 Q0 d5 1 2.250000 trial\nq1 Q0 d1 2 1.000000 trial\n"

    def test_write_empty(self, tmp_path):
        out = tmp_path / "run"
        write_run({}, "t", out)
        assert out.read_text() == ""

    def test_round_trip_100_rows(self, tmp_path, rng):
        results = {}
        for q in range(5):
            scored = []
            scores = np.sort(rng.uniform(0, 10, size=20))[::-1]
            for i in range(20):
                scored.append(ScoredCandidate(f"d{i:03d}", float(scores[i]), i + 1))
            results[f"q{q}"] = scored
        out = tmp_path / "run"
        write_run(results, "tag", out)
        first = out.read_bytes()
        run = parse_run(out)
        # re-writing the parsed structure reproduces the bytes
        rebuilt = {
            qid: [
                ScoredCandidate(r.passage_id, r.score, r.rank)
                for r in sorted((row for row in run.rows if row.query_id == qid), key=lambda r: r.rank)
            ]
            for qid in run.queries()
        }
        out2 = tmp_path / "run2"
        write_run(rebuilt, "tag", out2)
        assert out2.read_bytes() == first


class TestNdcg:
    def test_ideal_ordering_is_one(self):
        judgments = {"a": 3, "b": 2, "c": 1, "d": 0}
        assert ndcg_at_k(["a", "b", "c", "d"], judgments, 10) == pytest.approx(1.0)

    def test_hand_computed_fixture(self):
        # grades at ranks 1..3 are (0, 2, 1); no other judged passages
        judgments = {"p1": 0, "p2": 2, "p3": 1}
        got = ndcg_at_k(["p1", "p2", "p3"], judgments, 10)
        assert got == pytest.approx(0.659002, abs=1e-6)

    def test_all_zero_retrieved_but_relevant_elsewhere(self):
        judgments = {"x": 2, "y": 1}
        assert ndcg_at_k(["a", "b", "c"], judgments, 10) == 0.0

    def test_unjudged_count_as_zero(self):
        judgments = {"a": 1}
        with_unjudged = ndcg_at_k(["zzz", "a"], judgments, 10)
        assert with_unjudged == pytest.approx(1.0 / np.log2(3), abs=1e-9)

    def test_swap_toward_front_never_decreases(self, rng):
        for _ in range(50):
            pids = [f"d{i}" for i in range(8)]
            judgments = {pid: int(rng.integers(0, 4)) for pid in pids}
            ranking = list(rng.permutation(pids))
            i, j = sorted(rng.choice(8, size=2, replace=False))
            if judgments[ranking[j]] > judgments[ranking[i]]:
                swapped = ranking.copy()
                swapped[i], swapped[j] = swapped[j], swapped[i]
                assert ndcg_at_k(swapped, judgments, 8) >= ndcg_at_k(ranking, judgments, 8) - 1e-12

    def test_relabeling_invariance(self):
        judgments = {"a": 2, "b": 1}
        base = ndcg_at_k(["a", "b", "c"], judgments, 10)
        relabeled = ndcg_at_k(["x", "y", "z"], {"x": 2, "y": 1}, 10)
        assert base == relabeled


class TestMrr:
    def test_first_relevant_at_rank_3(self):
        assert mrr_at_k(["a", "b", "c"], {"c": 1}, 10) == pytest.approx(1 / 3)

    def test_none_relevant(self):
        assert mrr_at_k(["a", "b"], {"z": 2}, 10) == 0.0

    def test_rank_one(self):
        assert mrr_at_k(["a"], {"a": 1}, 10) == 1.0

    def test_nondecreasing_in_k(self):
        ranking = ["a", "b", "c", "d"]
        judgments = {"c": 1}
        values = [mrr_at_k(ranking, judgments, k) for k in range(1, 6)]
        assert values == sorted(values)

    def test_threshold(self):
        assert mrr_at_k(["a", "b"], {"a": 1, "b": 2}, 10, positive_threshold=2) == 0.5


def run_from_rankings(rankings):
    rows = []
    for qid, pids in rankings.items():
        for i, pid in enumerate(pids, start=1):
            rows.append(RunRow(qid, pid, i, float(100 - i), "t"))
    return RunFile(rows=rows)


class TestEvaluateRun:
    def test_mean_of_two_queries(self):
        qrels = Qrels()
        qrels.add("1", "a", 2)
        qrels.add("2", "b", 1)
        run = run_from_rankings({"1": ["a", "x"], "2": ["y", "b"]})
        report = evaluate_run(run, qrels, k=10)
        expected = (
            ndcg_at_k(["a", "x"], {"a": 2}, 10) + ndcg_at_k(["y", "b"], {"b": 1}, 10)
        ) / 2
        assert report.mean_ndcg == pytest.approx(expected)
        assert report.evaluated_queries == 2

    def test_query_missing_from_qrels_is_skipped_with_warning(self):
        qrels = Qrels()
        qrels.add("1", "a", 1)
        run = run_from_rankings({"1": ["a"], "9": ["b"]})
        report = evaluate_run(run, qrels, k=10)
        assert report.evaluated_queries == 1
        assert any("9" in w for w in report.warnings)

    def test_query_without_relevant_is_excluded_and_flagged(self):
        qrels = Qrels()
        qrels.add("1", "a", 1)
        qrels.add("2", "b", 0)
        run = run_from_rankings({"1": ["a"], "2": ["b"]})
        report = evaluate_run(run, qrels, k=10)
        assert report.evaluated_queries == 1
        assert report.excluded_queries == ["2"]

    def test_50_query_random_fixture_matches_oracle(self, rng):
        qrels = Qrels()
        rankings = {}
        for q in range(50):
            qid = f"q{q:02d}"
            pids = [f"d{q}_{i}" for i in range(30)]
            for pid in pids:
                grade = int(rng.integers(0, 4)) if rng.uniform() < 0.4 else 0
                if grade:
                    qrels.add(qid, pid, grade)
            rankings[qid] = list(rng.permutation(pids))
        run = run_from_rankings(rankings)
        report = evaluate_run(run, qrels, k=10)

        ndcgs, mrrs = [], []
        for qid, ranking in rankings.items():
            judged = qrels.judged(qid)
            if not any(g >= 1 for g in judged.values()):
                continue
            ndcgs.append(naive_ndcg_at_k(ranking, judged, 10))
            mrrs.append(naive_mrr_at_k(ranking, judged, 10))
        assert report.mean_ndcg == pytest.approx(sum(ndcgs) / len(ndcgs), abs=1e-9)
        assert report.mean_mrr == pytest.approx(sum(mrrs) / len(mrrs), abs=1e-9)
        assert report.evaluated_queries == len(ndcgs)
        for metrics in report.per_query.values():
            assert 0.0 <= metrics.ndcg <= 1.0
            assert 0.0 <= metrics.mrr <= 1.0
