import numpy as np
import pytest

from lateri import TokenEmbeddingMatrix, write_shard


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_query(rng, dim, normalized=False):
    values = rng.standard_normal((32, dim)).astype(np.float32)
    if normalized:
        values /= np.linalg.norm(values, axis=1, keepdims=True)
        return TokenEmbeddingMatrix(values, norm_state="l2_normalized")
    return TokenEmbeddingMatrix(values)


def random_passage(rng, dim, max_rows=192, normalized=False):
    rows = int(rng.integers(1, max_rows + 1))
    values = rng.standard_normal((rows, dim)).astype(np.float32)
    if normalized:
        values /= np.linalg.norm(values, axis=1, keepdims=True)
        return TokenEmbeddingMatrix(values, norm_state="l2_normalized")
    return TokenEmbeddingMatrix(values)


def make_corpus_shard(path, rng, count, dim, max_rows=24, prefix="p", dtype="f32"):
    """Write a shard of random passages; returns the record list."""
    records = []
    for i in range(count):
        rows = int(rng.integers(1, max_rows + 1))
        values = rng.standard_normal((rows, dim)).astype(np.float32)
        records.append((f"{prefix}{i:05d}", values))
    write_shard(path, records, dtype=dtype)
    return records
