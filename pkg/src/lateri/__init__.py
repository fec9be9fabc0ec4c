"""Late-interaction passage re-ranking engine over precomputed embeddings.

Scoring families: dense MaxSim (L2 / dot / cosine), binarized MaxSim over
bit-packed sign vectors, and poly-encoder code attention. Includes the
bit-exact shard/index file formats, TREC-style evaluation (nDCG@k, MRR@k),
a latency benchmark harness and a deterministic synthetic embedder.
"""

from .core import (
    QUERY_ROWS,
    ScoredCandidate,
    SimilarityMetric,
    TokenEmbeddingMatrix,
    maxsim_score,
    maxsim_scores,
    rerank,
    similarity,
    validate_query_matrix,
)
from .errors import DimensionMismatch, FormatError, LateriError, UnknownPassage
from .quantize import (
    PackedBinaryMatrix,
    StorageEstimate,
    binarize,
    estimate_index_size,
    maxsim_binary,
    packed_dot,
    rerank_binary,
    unpack_bits,
    unpack_signs,
)
from .polyenc import (
    PolyCodes,
    PassageVector,
    attend_codes,
    load_codes,
    poly_rerank,
    poly_score,
    random_codes,
)
from .index import (
    BuildReport,
    RerankIndex,
    ValidationReport,
    build_index,
    load_index,
    read_shard,
    validate_index,
    validate_shard,
    write_shard,
)
from .evaluation import (
    CandidateSet,
    MetricReport,
    Qrels,
    RunFile,
    evaluate_run,
    mrr_at_k,
    ndcg_at_k,
    parse_candidates,
    parse_qrels,
    parse_run,
    write_run,
)
from .bench import LatencyReport, bench_rank, bench_vectorize, throughput_report
from .synthembed import (
    ContextualityReport,
    DiffHistogram,
    MASK_TOKEN,
    SynthConfig,
    contextuality_analysis,
    synth_embed,
    tokenize,
)
from .scorers import ScorerConfig, make_scorer

__version__ = "0.1.0"

__all__ = [
    "QUERY_ROWS",
    "MASK_TOKEN",
    "ScoredCandidate",
    "SimilarityMetric",
    "TokenEmbeddingMatrix",
    "PackedBinaryMatrix",
    "StorageEstimate",
    "PolyCodes",
    "PassageVector",
    "BuildReport",
    "RerankIndex",
    "ValidationReport",
    "CandidateSet",
    "MetricReport",
    "Qrels",
    "RunFile",
    "LatencyReport",
    "ContextualityReport",
    "DiffHistogram",
    "SynthConfig",
    "ScorerConfig",
    "LateriError",
    "DimensionMismatch",
    "FormatError",
    "UnknownPassage",
    "similarity",
    "maxsim_score",
    "maxsim_scores",
    "rerank",
    "validate_query_matrix",
    "binarize",
    "packed_dot",
    "maxsim_binary",
    "rerank_binary",
    "unpack_bits",
    "unpack_signs",
    "estimate_index_size",
    "attend_codes",
    "poly_score",
    "poly_rerank",
    "random_codes",
    "load_codes",
    "build_index",
    "load_index",
    "read_shard",
    "write_shard",
    "validate_index",
    "validate_shard",
    "evaluate_run",
    "ndcg_at_k",
    "mrr_at_k",
    "parse_qrels",
    "parse_run",
    "parse_candidates",
    "write_run",
    "bench_rank",
    "bench_vectorize",
    "throughput_report",
    "synth_embed",
    "contextuality_analysis",
    "tokenize",
    "make_scorer",
]
