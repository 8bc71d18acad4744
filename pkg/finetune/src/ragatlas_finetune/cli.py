"""Train/generate CLI.

    ragatlas-finetune train --train-file train.jsonl --output-dir adapter/
    ragatlas-finetune generate --adapter adapter/ --contexts contexts.jsonl \
        --label summary --out generated.jsonl
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .data import DataFormatError
from .generate import GENERATABLE_LABELS, generate_records, read_context_lines, write_records
from .training import DivergenceError, TrainedAdapter, TrainSpec, train

log = logging.getLogger("ragatlas_finetune")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragatlas-finetune",
                                     description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="fine-tune LoRA adapters on exported data")
    tr.add_argument("--spec", help="YAML file with TrainSpec fields")
    tr.add_argument("--train-file", help="exported train.jsonl")
    tr.add_argument("--validation-file")
    tr.add_argument("--output-dir", default="adapter_out")
    tr.add_argument("--base-model", default="tiny",
                    help="'tiny', a local model dir, or a Hugging Face id")
    tr.add_argument("--rank", type=int, default=8)
    tr.add_argument("--alpha", type=float, default=32.0)
    tr.add_argument("--learning-rate", type=float, default=1e-2)
    tr.add_argument("--epochs", type=int, default=1)
    tr.add_argument("--batch-size", type=int, default=8)
    tr.add_argument("--seed", type=int, default=0)

    gen = sub.add_parser("generate", help="batch-generate Q&A records")
    gen.add_argument("--adapter", required=True, help="trained adapter directory")
    gen.add_argument("--contexts", required=True, help="ragatlas contexts.jsonl")
    gen.add_argument("--label", required=True, choices=GENERATABLE_LABELS)
    gen.add_argument("--out", required=True, help="output Q&A JSONL path")
    gen.add_argument("--batch-size", type=int, default=8)
    gen.add_argument("--max-new-tokens", type=int, default=64)
    return parser


def _spec_from_args(args: argparse.Namespace) -> TrainSpec:
    if args.spec:
        raw = yaml.safe_load(Path(args.spec).read_text(encoding="utf-8")) or {}
        return TrainSpec(**raw)
    if not args.train_file:
        raise DataFormatError("either --spec or --train-file is required")
    return TrainSpec(
        train_file=Path(args.train_file),
        validation_file=Path(args.validation_file) if args.validation_file else None,
        output_dir=Path(args.output_dir),
        base_model=args.base_model,
        rank=args.rank,
        alpha=args.alpha,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train":
            spec = _spec_from_args(args)
            adapter = train(spec)
            metrics = adapter.metrics
            log.info("trained: loss %.4f -> %.4f, trainable fraction %.4f",
                     metrics["initial_train_loss"], metrics["final_train_loss"],
                     adapter.trainable_fraction)
            print(json.dumps({
                "adapter_dir": str(adapter.adapter_dir),
                "initial_train_loss": metrics["initial_train_loss"],
                "final_train_loss": metrics["final_train_loss"],
                "trainable_fraction": adapter.trainable_fraction,
            }, sort_keys=True))
        else:
            adapter = TrainedAdapter.load(args.adapter)
            contexts = read_context_lines(args.contexts)
            records = generate_records(adapter, contexts, args.label,
                                       batch_size=args.batch_size,
                                       max_new_tokens=args.max_new_tokens)
            out = write_records(records, args.out)
            malformed = sum(1 for r in records if r.get("malformed_output"))
            log.info("generated %d records (%d flagged malformed) -> %s",
                     len(records), malformed, out)
    except (DataFormatError, DivergenceError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
