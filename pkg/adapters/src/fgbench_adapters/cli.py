"""Command line entry point: fgbench-adapter <kind> --in X --out Y."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from fgbench_adapters.jobs import AdapterJob, run_adapter

_KIND_HELP = {
    "embed-images": "image files -> embedding matrix (rows {image_id, path})",
    "embed-texts": "captions -> embedding matrix (rows {caption_id, text})",
    "score-pairs": "image/caption compatibility for correct-vs-wrong pairs",
    "generate-details": "prompt batch -> one detail sentence per row",
    "merge": "fold (rest, detail) pairs back into single captions",
    "annotate": "add tokens with POS tags and dependency heads to captions",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgbench-adapter",
        description="Model backends for the benchmark toolkit's file formats.")
    sub = parser.add_subparsers(dest="kind", required=True, metavar="<kind>")
    for kind, help_text in _KIND_HELP.items():
        p = sub.add_parser(kind, help=help_text)
        p.add_argument("--in", dest="input_path", type=Path, required=True,
                       metavar="X", help="input file")
        p.add_argument("--out", dest="output_path", type=Path, required=True,
                       metavar="Y", help="output file")
        p.add_argument("--model", dest="model_name", metavar="NAME",
                       help="backend name (each kind has a default)")
        p.add_argument("--seed", type=int, help="overrides FGBENCH_SEED (default 0)")
        p.add_argument("--device", default="cpu", help="device hint for torch backends")
        if kind == "merge":
            p.add_argument("--fine-tune", dest="fine_tune_path", type=Path,
                           metavar="PAIRS",
                           help="split pairs to train the lm model on")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    seed = args.seed
    if seed is None:
        raw = os.environ.get("FGBENCH_SEED", "0")
        try:
            seed = int(raw)
        except ValueError:
            parser.error(f"FGBENCH_SEED must be an integer, got {raw!r}")

    job = AdapterJob(
        kind=args.kind,
        input_path=args.input_path,
        output_path=args.output_path,
        model_name=args.model_name,
        device=args.device,
        seed=seed,
        fine_tune_path=getattr(args, "fine_tune_path", None),
    )
    return run_adapter(job)


if __name__ == "__main__":
    sys.exit(main())
