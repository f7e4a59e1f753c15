"""Command line: export a corpus as an ARTF embedding store."""

from __future__ import annotations

import argparse
import sys

from .artf import ArtfError
from .encoders import EncoderError
from .export import ExportError, ExportSpec, export

_KIND_ALIASES = {"prefix": "dense-prefix", "full": "dense-full",
                 "full-masked": "dense-full-masked"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="artefact-export",
        description="Run a pretrained encoder over a corpus and write "
                    "prefix/sentence embeddings in the ARTF format.",
    )
    p.add_argument("--encoder", required=True,
                   help="transformers model name/path, or hash:<dim>")
    p.add_argument("--pooling", choices=("cls", "mean"), default="cls")
    p.add_argument("--kind", choices=tuple(_KIND_ALIASES), default="prefix")
    p.add_argument("--crop", default=None, metavar="SIDE:PCT",
                   help="e.g. right:50 (percent of sentence length)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--in", dest="corpus", required=True, help="corpus file")
    p.add_argument("--out", required=True, help="ARTF output path")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    crop_side, crop_pct = "none", 1.0
    if args.crop:
        side, _, pct = args.crop.partition(":")
        crop_side, crop_pct = side, float(pct) / 100.0
    try:
        spec = ExportSpec(
            encoder=args.encoder, pooling=args.pooling,
            kind=_KIND_ALIASES[args.kind], crop_side=crop_side,
            crop_pct=crop_pct, corpus_path=args.corpus, output_path=args.out,
            batch_size=args.batch_size,
        )
        count = export(spec)
    except (ExportError, EncoderError, ArtfError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} records to {args.out}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
