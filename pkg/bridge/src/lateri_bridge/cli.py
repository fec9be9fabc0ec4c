"""CLI for shard export: mirrors ExportConfig flag for flag.

Text inputs are TSV files with one `id<TAB>text` pair per line.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .export import ExportConfig, Exporter


def read_texts(path: str) -> list[tuple[str, str]]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'id<TAB>text'")
            record_id, text = line.split("\t", 1)
            records.append((record_id, text))
    return records


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--texts", required=True, help="TSV file: id<TAB>text")
    p.add_argument("--dim", type=int, default=64, help="projection output width")
    p.add_argument("--no-layernorm", action="store_true")
    p.add_argument("--l2-normalize", action="store_true")
    p.add_argument("--mask-token", default=None,
                   help="mask substitute for tokenizers without one (e.g. <unk>)")
    p.add_argument("--dtype", choices=["f32", "f16"], default="f32")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--projection", default=None, help="npz parameter file")
    p.add_argument("--seed", type=int, default=0)


def _config(args: argparse.Namespace) -> ExportConfig:
    return ExportConfig(
        checkpoint=args.checkpoint,
        projection_dim=args.dim,
        apply_layernorm=not args.no_layernorm,
        l2_normalize=args.l2_normalize,
        mask_token=args.mask_token,
        dtype=args.dtype,
        batch_size=args.batch_size,
        projection_path=args.projection,
        seed=args.seed,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lateri-bridge", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("export-passages", help="token matrices, up to 192 rows each")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(kind="passages")

    p = sub.add_parser("export-queries", help="mask-augmented 32-row query matrices")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(kind="queries")

    p = sub.add_parser("export-poly", help="poly codes + single-vector passages")
    _add_common(p)
    p.add_argument("--codes", type=int, default=8, help="number of attention codes")
    p.add_argument("--out-codes", required=True)
    p.add_argument("--out-passages", required=True)
    p.set_defaults(kind="poly")

    return parser


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        records = read_texts(args.texts)
        exporter = Exporter(_config(args))
        if args.kind == "passages":
            path = exporter.export_passages(records, args.out)
            print(f"wrote {path}: {len(records)} passage records")
        elif args.kind == "queries":
            path = exporter.export_queries(records, args.out)
            print(f"wrote {path}: {len(records)} query records (32 rows each)")
        else:
            codes_path, passages_path = exporter.export_poly(
                records, args.codes, args.out_codes, args.out_passages
            )
            print(f"wrote {codes_path} (codes) and {passages_path}: {len(records)} records")
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
