"""Token-embedding export from pretrained transformer checkpoints.

The bridge owns everything model-side so the engine never loads model code:
encoder forward passes, the trained linear dimension-reduction layer with
its LayerNorm, query mask-augmentation to exactly 32 tokens, passage
truncation to 192, and poly-encoder codes / single-vector passage export.

Trained projection (and poly code) weights load from an .npz parameter
file; without one, a seeded random stand-in is used so pipelines can be
exercised before trained artifacts exist. Every export writes a sidecar
<shard>.meta.json recording the configuration that produced it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .shardio import write_shard

QUERY_TOKENS = 32
PASSAGE_TOKENS = 192
LAYERNORM_EPS = 1e-5


@dataclass
class ExportConfig:
    checkpoint: str
    projection_dim: int = 64
    apply_layernorm: bool = True
    l2_normalize: bool = False
    max_query_tokens: int = QUERY_TOKENS
    max_passage_tokens: int = PASSAGE_TOKENS
    mask_token: str | None = None  # substitute when the tokenizer has no mask
    dtype: str = "f32"
    batch_size: int = 16
    projection_path: str | None = None  # npz: weight, bias, ln_weight, ln_bias, poly_codes
    seed: int = 0  # seeds the stand-in weights when no parameter file is given


@dataclass
class Projection:
    weight: np.ndarray  # (hidden, dim)
    bias: np.ndarray  # (dim,)
    ln_weight: np.ndarray  # (dim,)
    ln_bias: np.ndarray  # (dim,)


class Exporter:
    """Loads one checkpoint and exports query/passage/poly shards from it."""

    def __init__(self, cfg: ExportConfig):
        from transformers import AutoModel, AutoTokenizer

        self.cfg = cfg
        self.tokenizer = AutoTokenizer.from_pretrained(cfg.checkpoint)
        self.model = AutoModel.from_pretrained(cfg.checkpoint)
        self.model.eval()
        self.hidden = int(self.model.config.hidden_size)
        if cfg.projection_path:
            with np.load(cfg.projection_path) as params:
                self._params = {key: np.asarray(params[key]) for key in params.files}
        else:
            self._params = None
        self.projection = self._load_projection()

    # -- parameters ---------------------------------------------------------

    def _load_projection(self) -> Projection:
        dim = self.cfg.projection_dim
        if self._params is not None:
            params = self._params
            weight = np.asarray(params["weight"], dtype=np.float32)
            if weight.shape != (self.hidden, dim):
                raise ValueError(
                    f"checkpoint mismatch: projection weight {weight.shape} does not fit "
                    f"hidden size {self.hidden} and projection dim {dim}"
                )
            bias = np.asarray(params["bias"], dtype=np.float32) if "bias" in params else np.zeros(dim, np.float32)
            ln_w = np.asarray(params["ln_weight"], dtype=np.float32) if "ln_weight" in params else np.ones(dim, np.float32)
            ln_b = np.asarray(params["ln_bias"], dtype=np.float32) if "ln_bias" in params else np.zeros(dim, np.float32)
            return Projection(weight, bias, ln_w, ln_b)
        rng = np.random.default_rng(self.cfg.seed)
        weight = (rng.standard_normal((self.hidden, dim)) / np.sqrt(self.hidden)).astype(np.float32)
        return Projection(weight, np.zeros(dim, np.float32), np.ones(dim, np.float32), np.zeros(dim, np.float32))

    def poly_codes(self, m: int) -> np.ndarray:
        """(m, hidden) code weights: trained if the parameter file has them."""
        if self._params is not None and "poly_codes" in self._params:
            codes = np.asarray(self._params["poly_codes"], dtype=np.float32)
            if codes.shape != (m, self.hidden):
                raise ValueError(
                    f"checkpoint mismatch: poly_codes {codes.shape}, expected ({m}, {self.hidden})"
                )
            return codes
        rng = np.random.default_rng(self.cfg.seed + 1)
        return (rng.standard_normal((m, self.hidden)) / np.sqrt(self.hidden)).astype(np.float32)

    # -- tokenization -------------------------------------------------------

    def _mask_id(self) -> int:
        if self.tokenizer.mask_token_id is not None:
            return int(self.tokenizer.mask_token_id)
        if self.cfg.mask_token is not None:
            token_id = self.tokenizer.convert_tokens_to_ids(self.cfg.mask_token)
            if token_id is not None and token_id != self.tokenizer.unk_token_id:
                return int(token_id)
        if self.tokenizer.unk_token_id is not None:
            return int(self.tokenizer.unk_token_id)
        raise ValueError("tokenizer has no mask token and no usable substitute")

    def _query_ids(self, text: str) -> list[int]:
        if not text.strip():
            raise ValueError("empty text")
        ids = self.tokenizer.encode(
            text, add_special_tokens=True, truncation=True,
            max_length=self.cfg.max_query_tokens,
        )
        mask_id = self._mask_id()
        return ids + [mask_id] * (self.cfg.max_query_tokens - len(ids))

    # -- encoding -----------------------------------------------------------

    @torch.no_grad()
    def _encode_ids(self, batch_ids: list[list[int]]) -> np.ndarray:
        # equal-length sequences (queries): full attention incl. mask padding
        input_ids = torch.tensor(batch_ids, dtype=torch.long)
        attention = torch.ones_like(input_ids)
        out = self.model(input_ids=input_ids, attention_mask=attention)
        return out.last_hidden_state.numpy()

    @torch.no_grad()
    def _encode_texts(self, texts: Sequence[str], max_length: int):
        enc = self.tokenizer(
            list(texts), add_special_tokens=True, truncation=True,
            max_length=max_length, padding=True, return_tensors="pt",
        )
        out = self.model(**enc)
        hidden = out.last_hidden_state.numpy()
        mask = enc["attention_mask"].numpy().astype(bool)
        return hidden, mask

    def _project(self, rows: np.ndarray) -> np.ndarray:
        x = rows.astype(np.float32) @ self.projection.weight + self.projection.bias
        if self.cfg.apply_layernorm:
            mean = x.mean(axis=-1, keepdims=True)
            var = x.var(axis=-1, keepdims=True)
            x = (x - mean) / np.sqrt(var + LAYERNORM_EPS)
            x = x * self.projection.ln_weight + self.projection.ln_bias
        if self.cfg.l2_normalize:
            norms = np.linalg.norm(x, axis=-1, keepdims=True)
            if np.any(norms == 0.0):
                raise ValueError("cannot l2-normalize a zero token vector")
            x = x / norms
        return x.astype(np.float32)

    # -- exports ------------------------------------------------------------

    def _check_records(self, records: Sequence[tuple[str, str]]) -> None:
        if not records:
            raise ValueError("no texts to export")
        for record_id, text in records:
            if not record_id:
                raise ValueError("empty record id")
            if not text.strip():
                raise ValueError(f"record {record_id!r}: empty text")

    def _write_meta(self, shard_path: Path, kind: str, extra: dict | None = None) -> None:
        meta = {"kind": kind, "hidden_size": self.hidden, **asdict(self.cfg)}
        if extra:
            meta.update(extra)
        Path(str(shard_path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    def export_passages(self, records: Sequence[tuple[str, str]], out: str | Path) -> Path:
        """One shard record per passage: <=192 rows at the projection dim."""
        self._check_records(records)
        shard_records = []
        for start in range(0, len(records), self.cfg.batch_size):
            batch = records[start : start + self.cfg.batch_size]
            hidden, mask = self._encode_texts(
                [text for _, text in batch], self.cfg.max_passage_tokens
            )
            for row, (record_id, _) in enumerate(batch):
                rows = hidden[row][mask[row]]
                projected = self._project(rows)
                if not np.all(np.isfinite(projected)):
                    raise ValueError(f"record {record_id!r}: non-finite embedding values")
                shard_records.append((record_id, projected))
        path = write_shard(out, shard_records, dtype=self.cfg.dtype)
        self._write_meta(path, "passages")
        return path

    def export_queries(self, records: Sequence[tuple[str, str]], out: str | Path) -> Path:
        """Exactly 32 rows per record; short queries are mask-augmented
        before encoding so the mask embeddings are contextualized."""
        self._check_records(records)
        shard_records = []
        for start in range(0, len(records), self.cfg.batch_size):
            batch = records[start : start + self.cfg.batch_size]
            hidden = self._encode_ids([self._query_ids(text) for _, text in batch])
            for row, (record_id, _) in enumerate(batch):
                projected = self._project(hidden[row])
                if projected.shape[0] != self.cfg.max_query_tokens:
                    raise ValueError(f"record {record_id!r}: expected {self.cfg.max_query_tokens} rows")
                shard_records.append((record_id, projected))
        path = write_shard(out, shard_records, dtype=self.cfg.dtype)
        self._write_meta(path, "queries")
        return path

    def export_poly(
        self,
        records: Sequence[tuple[str, str]],
        m: int,
        out_codes: str | Path,
        out_passages: str | Path,
    ) -> tuple[Path, Path]:
        """Codes shard (record id "polycodes", rows=m) plus single-vector
        passage records at the encoder's hidden size (first-token pooling)."""
        self._check_records(records)
        if m < 1:
            raise ValueError(f"code count must be >= 1, got {m}")
        codes_path = write_shard(out_codes, [("polycodes", self.poly_codes(m))], dtype=self.cfg.dtype)
        self._write_meta(codes_path, "polycodes", {"m": m})
        shard_records = []
        for start in range(0, len(records), self.cfg.batch_size):
            batch = records[start : start + self.cfg.batch_size]
            hidden, _mask = self._encode_texts(
                [text for _, text in batch], self.cfg.max_passage_tokens
            )
            for row, (record_id, _) in enumerate(batch):
                vector = hidden[row, 0:1, :].astype(np.float32)  # first-token pooling
                shard_records.append((record_id, vector))
        passages_path = write_shard(out_passages, shard_records, dtype=self.cfg.dtype)
        self._write_meta(passages_path, "poly_passages", {"m": m})
        return codes_path, passages_path
