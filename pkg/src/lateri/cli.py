"""Command-line surface: build, rerank, evaluate, bench, analyze, validate.

Exit codes are fixed for scripting: 0 success, 1 usage error, 2 data error
(bad files, contract violations, I/O). All randomness funnels through
--seed; --threads falls back to the LATERI_THREADS environment variable
and then to the machine's CPU count.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import bench as bench_mod
from . import evaluation, index as index_mod, polyenc, quantize, synthembed
from .core import SimilarityMetric, TokenEmbeddingMatrix, validate_query_matrix
from .errors import LateriError
from .scorers import ScorerConfig, make_scorer

USAGE_ERROR = 1
DATA_ERROR = 2


def _default_threads() -> int:
    env = os.environ.get("LATERI_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_scorer_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scorer", choices=["maxsim", "maxsim-binary", "poly"], default="maxsim")
    p.add_argument("--metric", choices=["l2", "dot", "cosine"], default="l2")
    p.add_argument("--mode", choices=["asymmetric", "symmetric"], default="asymmetric",
                   help="binary scoring mode (maxsim-binary only)")
    p.add_argument("--codes", help="shard holding the 'polycodes' record (poly only)")
    p.add_argument("--normalize-candidate", action="store_true",
                   help="l2-normalize candidate vectors before poly scoring")


def _scorer_config(args: argparse.Namespace) -> ScorerConfig:
    codes = None
    if args.scorer == "poly":
        if not args.codes:
            raise LateriError("poly scorer requires --codes")
        codes = polyenc.load_codes(args.codes)
    return ScorerConfig(
        family=args.scorer,
        metric=SimilarityMetric.from_string(args.metric),
        mode=args.mode,
        codes=codes,
        normalize_candidate=args.normalize_candidate,
    )


def _load_queries(path: str) -> list[tuple[str, TokenEmbeddingMatrix]]:
    shard = index_mod.read_shard(path)
    queries = []
    for qid, values in shard.records:
        queries.append((qid, validate_query_matrix(TokenEmbeddingMatrix(values))))
    return queries


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lateri", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("build-index", help="build a rerank index from embedding shards")
    p.add_argument("--shards", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dtype", choices=["f32", "f16"], default="f32")
    p.add_argument("--quantize", action="store_true", help="sign-binarize records (bit index)")
    p.set_defaults(func=_cmd_build_index)

    p = sub.add_parser("rerank", help="rerank candidate lists and write a TREC run")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="query shard (32-row records)")
    p.add_argument("--candidates", required=True, help="TREC run file with candidates")
    _add_scorer_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="lateri")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("evaluate", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("bench", help="latency benchmark of the ranking stage")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    _add_scorer_args(p)
    p.add_argument("--candidate-count", type=int, default=bench_mod.DEFAULT_CANDIDATES)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--warmup", type=int, default=bench_mod.DEFAULT_WARMUP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("analyze-context", help="embedding contextuality histograms")
    p.add_argument("--sentence-a", required=True)
    p.add_argument("--sentence-b", required=True)
    p.add_argument("--shared-word", required=True)
    p.add_argument("--other-word", required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--context-mix", type=float, default=0.3)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--out", help="write histogram DSV here instead of stdout")
    p.set_defaults(func=_cmd_analyze_context)

    p = sub.add_parser("validate-index", help="check index/shard file invariants")
    p.add_argument("path")
    p.set_defaults(func=_cmd_validate_index)

    p = sub.add_parser("estimate-size", help="storage arithmetic for an index configuration")
    p.add_argument("--passages", type=float, required=True)
    p.add_argument("--avg-tokens", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--dtype", choices=["f32", "f16", "bit"], required=True)
    p.add_argument("--baseline-dim", type=int, default=None)
    p.set_defaults(func=_cmd_estimate_size)

    return parser


def _cmd_build_index(args: argparse.Namespace) -> int:
    report = index_mod.build_index(args.shards, args.out, dtype=args.dtype, quantize=args.quantize)
    print(
        f"built {args.out}: records={report.record_count} dtype={report.dtype} "
        f"dim={report.dim} payload_bytes={report.payload_bytes} file_bytes={report.file_bytes}"
    )
    return 0


def _cmd_rerank(args: argparse.Namespace) -> int:
    config = _scorer_config(args)
    threads = args.threads if args.threads else _default_threads()
    with index_mod.load_index(args.index) as idx:
        scorer = make_scorer(config, idx)
        queries = dict(_load_queries(args.queries))
        candidates = evaluation.parse_candidates(args.candidates)

        shared = sorted(set(queries) & set(candidates.lists), key=lambda q: q.encode("utf-8"))
        for qid in sorted(set(candidates.lists) - set(queries)):
            print(f"warning: query {qid} has candidates but no embedding", file=sys.stderr)
        for qid in sorted(set(queries) - set(candidates.lists)):
            print(f"warning: query {qid} has embeddings but no candidates", file=sys.stderr)

        def run_query(qid: str):
            prepared = scorer.prepare(queries[qid])
            return qid, scorer.rank(prepared, candidates.for_query(qid))

        if threads > 1 and len(shared) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = dict(pool.map(run_query, shared))
        else:
            results = dict(map(run_query, shared))

    evaluation.write_run(results, args.tag, args.out)
    print(f"wrote {args.out}: {len(shared)} queries, tag={args.tag}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    run = evaluation.parse_run(args.run)
    qrels = evaluation.parse_qrels(args.qrels)
    report = evaluation.evaluate_run(run, qrels, k=args.k)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(report.summary())
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _scorer_config(args)
    threads = args.threads if args.threads else _default_threads()
    with index_mod.load_index(args.index) as idx:
        scorer = make_scorer(config, idx)
        queries = _load_queries(args.queries)
        report = bench_mod.bench_rank(
            idx,
            queries,
            scorer,
            candidate_count=args.candidate_count,
            repeats=args.repeats,
            warmup=args.warmup,
            seed=args.seed,
            threads=threads,
        )
    for record in report.to_records():
        print(record)
    print(report.summary_table())
    print(f"throughput_qps={bench_mod.throughput_report(report):.2f}")
    return 0


def _cmd_analyze_context(args: argparse.Namespace) -> int:
    cfg = synthembed.SynthConfig(dim=args.dim, seed=args.seed, context_mix=args.context_mix)
    report = synthembed.contextuality_analysis(
        synthembed.tokenize(args.sentence_a),
        synthembed.tokenize(args.sentence_b),
        args.shared_word.lower(),
        args.other_word.lower(),
        cfg,
        bins=args.bins,
    )
    text = synthembed.report_to_delimited(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for hist in report.histograms:
        print(f"{hist.label} l2_norm={hist.l2_norm:.6f}", file=sys.stderr)
    return 0


def _cmd_validate_index(args: argparse.Namespace) -> int:
    report = index_mod.validate_index(args.path)
    if report.ok:
        print(f"{args.path}: ok")
        return 0
    for violation in report.violations:
        print(f"{args.path}: {violation}")
    return DATA_ERROR


def _cmd_estimate_size(args: argparse.Namespace) -> int:
    estimate = quantize.estimate_index_size(
        int(args.passages), args.avg_tokens, args.dim, args.dtype,
        baseline_dim=args.baseline_dim,
    )
    print(
        f"passages={estimate.passage_count} avg_tokens={estimate.avg_tokens:g} "
        f"dim={estimate.dim} dtype={estimate.dtype} "
        f"bytes_per_vector={estimate.bytes_per_vector:g} payload_bytes={estimate.payload_bytes} "
        f"f32_baseline_dim={estimate.baseline_dim} ratio_vs_f32={estimate.baseline_ratio:g}"
    )
    return 0


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else USAGE_ERROR
    try:
        return args.func(args)
    except LateriError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
