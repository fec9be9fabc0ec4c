import struct

import numpy as np
import pytest

from lateri import (
    FormatError,
    LateriError,
    PackedBinaryMatrix,
    TokenEmbeddingMatrix,
    UnknownPassage,
    binarize,
    build_index,
    load_index,
    read_shard,
    unpack_bits,
    validate_index,
    validate_shard,
    write_shard,
)
from lateri.index import HEADER_BYTES
from oracles import naive_sign_bits


@pytest.fixture
def two_shards(tmp_path, rng):
    recs_a = [(f"a{i}", rng.standard_normal((3 + i, 64)).astype(np.float32)) for i in range(3)]
    recs_b = [(f"b{i}", rng.standard_normal((2, 64)).astype(np.float32)) for i in range(2)]
    pa, pb = tmp_path / "a.shard", tmp_path / "b.shard"
    write_shard(pa, recs_a)
    write_shard(pb, recs_b)
    return [pa, pb], dict(recs_a + recs_b)


class TestShards:
    def test_round_trip(self, tmp_path, rng):
        records = [("x", rng.standard_normal((4, 8)).astype(np.float32))]
        write_shard(tmp_path / "s", records)
        shard = read_shard(tmp_path / "s")
        assert shard.dtype == "f32" and shard.dim == 8
        assert shard.records[0][0] == "x"
        assert np.array_equal(shard.records[0][1], records[0][1])

    def test_f16_round_trip(self, tmp_path, rng):
        values = rng.standard_normal((4, 8)).astype(np.float16)
        write_shard(tmp_path / "s", [("x", values)], dtype="f16")
        shard = read_shard(tmp_path / "s")
        assert shard.records[0][1].dtype == np.float16
        assert np.array_equal(shard.records[0][1], values)

    def test_validate_clean_shard(self, tmp_path, rng):
        write_shard(tmp_path / "s", [("x", rng.standard_normal((2, 4)).astype(np.float32))])
        assert validate_shard(tmp_path / "s").ok

    def test_validate_flags_nan(self, tmp_path):
        bad = np.full((2, 4), np.nan, dtype=np.float32)
        write_shard(tmp_path / "s", [("x", bad)])
        report = validate_shard(tmp_path / "s")
        assert any("non-finite" in v for v in report.violations)

    def test_shard_bad_magic(self, tmp_path):
        (tmp_path / "s").write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(FormatError, match="bad magic"):
            read_shard(tmp_path / "s")


class TestBuildIndex:
    def test_record_count_and_payload_arithmetic(self, tmp_path, two_shards):
        shards, records = two_shards
        report = build_index(shards, tmp_path / "idx", dtype="f32")
        assert report.record_count == 5
        expected_payload = sum(v.shape[0] * 64 * 4 for v in records.values())
        assert report.payload_bytes == expected_payload
        assert (tmp_path / "idx").stat().st_size == report.file_bytes

    def test_quantized_payload_is_one_thirtysecond(self, tmp_path, two_shards):
        shards, _ = two_shards
        dense = build_index(shards, tmp_path / "dense.idx", dtype="f32")
        packed = build_index(shards, tmp_path / "bit.idx", quantize=True)
        assert packed.payload_bytes * 32 == dense.payload_bytes

    def test_duplicate_id_names_the_id(self, tmp_path, rng):
        values = rng.standard_normal((2, 8)).astype(np.float32)
        write_shard(tmp_path / "s1", [("dup", values)])
        write_shard(tmp_path / "s2", [("dup", values)])
        with pytest.raises(LateriError, match="dup"):
            build_index([tmp_path / "s1", tmp_path / "s2"], tmp_path / "idx")

    def test_mixed_dims_error(self, tmp_path, rng):
        write_shard(tmp_path / "s1", [("a", rng.standard_normal((2, 8)).astype(np.float32))])
        write_shard(tmp_path / "s2", [("b", rng.standard_normal((2, 16)).astype(np.float32))])
        with pytest.raises(LateriError, match="mixed dims"):
            build_index([tmp_path / "s1", tmp_path / "s2"], tmp_path / "idx")

    def test_unwritable_path(self, tmp_path, two_shards):
        shards, _ = two_shards
        with pytest.raises(OSError):
            build_index(shards, tmp_path / "missing" / "idx")

    def test_rows_over_192_rejected(self, tmp_path, rng):
        write_shard(tmp_path / "s", [("long", rng.standard_normal((193, 8)).astype(np.float32))])
        with pytest.raises(LateriError, match="192"):
            build_index([tmp_path / "s"], tmp_path / "idx")


class TestLoadAndGet:
    def test_round_trip_bit_identical_f32(self, tmp_path, two_shards):
        shards, records = two_shards
        build_index(shards, tmp_path / "idx", dtype="f32")
        with load_index(tmp_path / "idx") as idx:
            assert idx.record_count == len(records)
            for pid, values in records.items():
                got = idx.get_passage(pid)
                assert isinstance(got, TokenEmbeddingMatrix)
                assert got.values.tobytes() == values.tobytes()

    def test_round_trip_bit_identical_f16(self, tmp_path, rng):
        values = rng.standard_normal((5, 16)).astype(np.float16)
        write_shard(tmp_path / "s", [("h", values)], dtype="f16")
        build_index([tmp_path / "s"], tmp_path / "idx", dtype="f16")
        with load_index(tmp_path / "idx") as idx:
            got = idx.get_passage("h")
            assert got.values.dtype == np.float16
            assert got.values.tobytes() == values.tobytes()

    def test_packed_record_signs_match_source(self, tmp_path, rng):
        values = rng.standard_normal((6, 64)).astype(np.float32)
        write_shard(tmp_path / "s", [("p", values)])
        build_index([tmp_path / "s"], tmp_path / "idx", quantize=True)
        with load_index(tmp_path / "idx") as idx:
            got = idx.get_passage("p")
            assert isinstance(got, PackedBinaryMatrix)
            assert np.array_equal(unpack_bits(got), naive_sign_bits(values))
            expected = binarize(TokenEmbeddingMatrix(values))
            assert np.array_equal(got.words, expected.words)

    def test_unknown_id(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        with load_index(tmp_path / "idx") as idx:
            with pytest.raises(UnknownPassage, match="nope"):
                idx.get_passage("nope")

    def test_ids_sorted_bytewise(self, tmp_path, two_shards):
        shards, records = two_shards
        build_index(shards, tmp_path / "idx")
        with load_index(tmp_path / "idx") as idx:
            ids = idx.ids()
            assert ids == sorted(records, key=lambda p: p.encode("utf-8"))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "idx"
        path.write_bytes(b"XXXX" + bytes(40))
        with pytest.raises(FormatError, match="bad magic"):
            load_index(path)

    def test_unsupported_version(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        raw = bytearray((tmp_path / "idx").read_bytes())
        struct.pack_into("<I", raw, 4, 99)
        (tmp_path / "idx").write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_index(tmp_path / "idx")

    def test_truncated_payload(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        raw = (tmp_path / "idx").read_bytes()
        (tmp_path / "idx").write_bytes(raw[:-17])
        with pytest.raises(FormatError, match="truncated payload"):
            load_index(tmp_path / "idx")

    def test_loading_does_not_modify_file(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        before = (tmp_path / "idx").read_bytes()
        with load_index(tmp_path / "idx") as idx:
            idx.get_passage(idx.ids()[0])
        assert (tmp_path / "idx").read_bytes() == before


def _first_table_entry_offset_pos(raw: bytes) -> int:
    """Byte position of the offset field of the first id-table entry."""
    (id_len,) = struct.unpack_from("<H", raw, HEADER_BYTES)
    return HEADER_BYTES + 2 + id_len + 2


class TestValidateIndex:
    def test_fresh_index_is_clean(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        assert validate_index(tmp_path / "idx").ok

    def test_fresh_bit_index_is_clean(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx", quantize=True)
        assert validate_index(tmp_path / "idx").ok

    def test_detects_bad_magic(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        raw = bytearray((tmp_path / "idx").read_bytes())
        raw[:4] = b"JUNK"
        (tmp_path / "idx").write_bytes(bytes(raw))
        report = validate_index(tmp_path / "idx")
        assert any("bad magic" in v for v in report.violations)

    def test_detects_nonmonotonic_offset(self, tmp_path, two_shards):
        shards, _ = two_shards
        build_index(shards, tmp_path / "idx")
        raw = bytearray((tmp_path / "idx").read_bytes())
        pos = _first_table_entry_offset_pos(raw)
        struct.pack_into("<Q", raw, pos, 10_000)  # first offset must be 0
        (tmp_path / "idx").write_bytes(bytes(raw))
        report = validate_index(tmp_path / "idx")
        assert any("non-monotonic offset" in v for v in report.violations)

    def test_detects_nan_payload(self, tmp_path, rng):
        values = rng.standard_normal((3, 8)).astype(np.float32)
        write_shard(tmp_path / "s", [("ok", values), ("poisoned", values.copy())])
        build_index([tmp_path / "s"], tmp_path / "idx")
        with load_index(tmp_path / "idx") as idx:
            offset, rows = idx._table["poisoned"]
            start = idx._payload_start + offset
        raw = bytearray((tmp_path / "idx").read_bytes())
        struct.pack_into("<f", raw, start, float("nan"))
        (tmp_path / "idx").write_bytes(bytes(raw))
        report = validate_index(tmp_path / "idx")
        assert any("non-finite" in v and "poisoned" in v for v in report.violations)

    def test_validate_dispatches_to_shards(self, tmp_path, rng):
        write_shard(tmp_path / "s", [("x", rng.standard_normal((2, 4)).astype(np.float32))])
        assert validate_index(tmp_path / "s").ok
