"""Command line: export --corpus ... --model ... --out ..."""
import argparse
import logging
import sys

from .errors import DataError, ExportError, ModelError
from .export import SKIP_SUFFIX, ExportJob, run_export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sore-export",
        description="Export entity-pair features from a pretrained encoder.")
    parser.add_argument("--corpus", required=True,
                        help="JSON-lines corpus with id/tokens/e1/e2 fields")
    parser.add_argument("--model", required=True,
                        help="pretrained encoder: model name or local directory")
    parser.add_argument("--out", required=True, help="output feature file")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-length", type=int, default=128,
                        help="subword budget per sentence, framing included")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        job = ExportJob(corpus=args.corpus, model=args.model, out=args.out,
                        batch_size=args.batch_size, max_length=args.max_length)
        report = run_export(job)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {report.rows} rows (dim {report.dim}) to {args.out}")
    if report.skipped:
        print(f"skipped {len(report.skipped)} over-length sentences, "
              f"ids in {args.out}{SKIP_SUFFIX}")
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
