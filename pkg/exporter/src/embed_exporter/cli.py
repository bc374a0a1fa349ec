"""Command-line entry point for the embedding exporter."""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, ExportJob, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-exporter",
        description="Export per-article transformer [CLS] embeddings to the "
        "fusenews interchange format.",
    )
    parser.add_argument("--dataset", required=True, help="input CSV (id,title,text[,label])")
    parser.add_argument("--output", required=True, help="output embedding file")
    parser.add_argument(
        "--model-name",
        default="bert-base-uncased",
        help="Hugging Face model name or local path (default bert-base-uncased)",
    )
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument(
        "--max-length", type=int, default=256,
        help="token truncation length for title+body (default 256)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            dataset=args.dataset,
            output=args.output,
            model_name=args.model_name,
            batch_size=args.batch_size,
            max_length=args.max_length,
        )
        count = export_embeddings(job)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} embeddings to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
