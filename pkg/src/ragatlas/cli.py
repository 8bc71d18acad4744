"""Command-line pipeline: ingest, label, agreement, generate, critique,
filter, bench, report, export-finetune.

Every command reads one config file, writes its artifacts under the run
directory, and is resumable: a completed stage records a checksum of its
inputs and is skipped when re-run unchanged (``--force`` overrides).
Artifacts under ``<run_dir>/<stage>/`` are deterministic byte-for-byte; run
telemetry (wall time, token usage) lives separately under
``<run_dir>/run_meta/``.

Exit codes: 0 success, 1 stage failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import reports
from .config import ConfigError, RunConfig, load_config
from .critique import CritiqueError, critique_suite, filter_records
from .gateway import (
    GatewayError,
    HttpBackend,
    LlmGateway,
    ScriptedBackend,
    stub_responder,
)
from .generation import (
    GenerationError,
    build_statement_set,
    export_finetune_dataset,
    generate_labeled_qa,
    generate_simple_qa,
    LABEL_TO_KIND,
)
from .labelling import (
    LabelError,
    agreement_report,
    attach_annotator_labels,
    confusion_matrix,
    consensus_labels,
    DISCARDED,
    ingest_annotator_labels,
    label_dataset,
)
from .records import (
    CorpusError,
    DatasetManifest,
    ingest_contexts,
    ingest_qas,
    resolve_contexts,
    write_contexts,
    write_qas,
)
from .retrieval import (
    HybridParams,
    RetrievalError,
    benchmark_by_label,
    build_dense_index,
    build_lexical_index,
)

log = logging.getLogger("ragatlas")

COMMANDS = ("ingest", "label", "agreement", "generate", "critique", "filter",
            "bench", "report", "export-finetune")


@dataclass
class RunLedger:
    """Per-stage counts plus token totals; persisted without wall times so
    artifacts stay byte-reproducible (timings go to the log)."""

    stages: dict[str, dict[str, int]] = field(default_factory=dict)
    token_usage: dict[str, int] = field(default_factory=dict)

    def record(self, stage: str, processed: int, failed: int = 0,
               discarded: int = 0) -> None:
        self.stages[stage] = {
            "input": processed + failed + discarded,
            "processed": processed,
            "failed": failed,
            "discarded": discarded,
        }

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"stages": self.stages, "token_usage": self.token_usage}
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "RunLedger":
        if not path.exists():
            return cls()
        raw = json.loads(path.read_text(encoding="utf-8"))
        return cls(stages=raw.get("stages", {}), token_usage=raw.get("token_usage", {}))


class StageFailure(RuntimeError):
    pass


@dataclass
class Runtime:
    cfg: RunConfig
    force: bool = False

    def __post_init__(self) -> None:
        backend = self._build_backend()
        cache = self.cfg.run_dir / "run_meta" / "cache" / "embeddings"
        self.chat_gw = LlmGateway(backend, self.cfg.chat)
        self.embed_gw = LlmGateway(backend, self.cfg.embed, embed_cache_dir=cache)
        self.rerank_gw = LlmGateway(backend, self.cfg.rerank)
        self.ledger_path = self.cfg.run_dir / "run_meta" / "ledger.json"
        self.ledger = RunLedger.load(self.ledger_path)

    def _build_backend(self):
        if self.cfg.backend == "http":
            return HttpBackend()
        return ScriptedBackend(responder=stub_responder, embed_dim=self.cfg.embed_dim)

    # -- resumability -----------------------------------------------------

    def _stage_dir(self, stage: str) -> Path:
        return self.cfg.run_dir / stage

    def _checksum(self, stage: str, inputs: list[Path], options: dict) -> str:
        h = hashlib.sha256(stage.encode())
        for path in sorted(inputs):
            h.update(str(path.name).encode())
            h.update(hashlib.sha256(path.read_bytes()).digest())
        h.update(json.dumps(options, sort_keys=True, default=str).encode())
        return h.hexdigest()

    def should_skip(self, stage: str, inputs: list[Path], options: dict) -> bool:
        marker = self._stage_dir(stage) / ".complete"
        if self.force or not marker.exists():
            return False
        try:
            recorded = json.loads(marker.read_text(encoding="utf-8"))["checksum"]
        except (json.JSONDecodeError, KeyError):
            return False
        return recorded == self._checksum(stage, inputs, options)

    def mark_complete(self, stage: str, inputs: list[Path], options: dict) -> None:
        marker = self._stage_dir(stage) / ".complete"
        marker.parent.mkdir(parents=True, exist_ok=True)
        marker.write_text(
            json.dumps({"checksum": self._checksum(stage, inputs, options)},
                       sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def finish(self) -> None:
        for gw in (self.chat_gw, self.embed_gw, self.rerank_gw):
            for key, value in gw.total_usage.items():
                self.ledger.token_usage[key] = self.ledger.token_usage.get(key, 0) + value
        self.ledger.save(self.ledger_path)

    # -- artifact resolution ----------------------------------------------

    def artifact(self, stage: str, name: str) -> Path:
        return self._stage_dir(stage) / name

    def require(self, stage: str, name: str) -> Path:
        path = self.artifact(stage, name)
        if not path.exists():
            raise StageFailure(
                f"missing upstream artifact {path}; run the {stage!r} stage first"
            )
        return path

    def latest_qas_path(self, include: tuple[str, ...]) -> Path:
        order = [
            ("filter", "kept.jsonl"),
            ("critique", "qas_critiqued.jsonl"),
            ("generate", "generated_qas.jsonl"),
            ("label", "qas_labelled.jsonl"),
            ("ingest", "qas.jsonl"),
        ]
        for stage, name in order:
            if stage in include and self.artifact(stage, name).exists():
                return self.artifact(stage, name)
        raise StageFailure(f"no Q&A artifact found among stages {include}")


# ---------------------------------------------------------------------------
# stages


def stage_ingest(rt: Runtime) -> None:
    cfg = rt.cfg
    if cfg.corpus.contexts is None:
        raise StageFailure("config corpus.contexts is required for ingest")
    inputs = [cfg.corpus.contexts] + ([cfg.corpus.qas] if cfg.corpus.qas else [])
    options = {"format": cfg.corpus.format, "dataset": cfg.corpus.dataset_name}
    if rt.should_skip("ingest", inputs, options):
        log.info("ingest: up to date, skipping")
        return
    contexts = ingest_contexts(cfg.corpus.contexts, format=cfg.corpus.format)
    qas = ingest_qas(cfg.corpus.qas) if cfg.corpus.qas else []
    if qas:
        resolve_contexts(qas, contexts)
    write_contexts(contexts, rt.artifact("ingest", "contexts.jsonl"))
    write_qas(qas, rt.artifact("ingest", "qas.jsonl"))
    manifest = DatasetManifest(
        name=cfg.corpus.dataset_name, context_count=len(contexts), qa_count=len(qas)
    ).validate()
    rt.artifact("ingest", "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    rt.ledger.record("ingest", processed=len(contexts) + len(qas))
    rt.mark_complete("ingest", inputs, options)
    log.info("ingest: %d contexts, %d qas", len(contexts), len(qas))


def stage_label(rt: Runtime) -> None:
    ctx_path = rt.require("ingest", "contexts.jsonl")
    qas_path = rt.require("ingest", "qas.jsonl")
    inputs = [ctx_path, qas_path]
    options = {"model": rt.cfg.chat.model_id}
    if rt.should_skip("label", inputs, options):
        log.info("label: up to date, skipping")
        return
    contexts = ingest_contexts(ctx_path)
    qas = ingest_qas(qas_path)
    by_id = resolve_contexts(qas, contexts)
    result = label_dataset(qas, by_id, rt.chat_gw, dataset_name=rt.cfg.corpus.dataset_name)
    write_qas(result.records, rt.artifact("label", "qas_labelled.jsonl"))
    reports.write_composition(
        result.manifest,
        rt.artifact("label", "composition.csv"),
        rt.artifact("label", "composition.md"),
    )
    rt.artifact("label", "manifest.json").write_text(
        json.dumps(result.manifest.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    rt.ledger.record("label", processed=len(qas) - len(result.failed_ids),
                     failed=len(result.failed_ids))
    rt.mark_complete("label", inputs, options)
    log.info("label: %d labelled, %d failed", len(qas) - len(result.failed_ids),
             len(result.failed_ids))


def stage_agreement(rt: Runtime) -> None:
    cfg = rt.cfg
    if cfg.corpus.annotations is None:
        raise StageFailure("config corpus.annotations is required for agreement")
    qas_path = rt.latest_qas_path(("label", "ingest"))
    inputs = [cfg.corpus.annotations, qas_path]
    if rt.should_skip("agreement", inputs, {}):
        log.info("agreement: up to date, skipping")
        return
    qas = ingest_qas(qas_path)
    table = ingest_annotator_labels(cfg.corpus.annotations)
    attach_annotator_labels(qas, table)
    annotated = [qa for qa in qas if qa.annotator_labels]
    if not annotated:
        raise StageFailure("no Q&A records carry annotator labels")
    widths = {len(qa.annotator_labels) for qa in annotated}
    if len(widths) != 1:
        raise StageFailure(f"inconsistent annotator counts: {sorted(widths)}")
    labels_by_item = [qa.annotator_labels for qa in annotated]
    model_labels = None
    confusion = None
    if all(qa.predicted_label for qa in annotated):
        model_labels = [qa.predicted_label for qa in annotated]
        votes = consensus_labels(labels_by_item)
        pairs = [(pred, vote) for pred, vote in zip(model_labels, votes)
                 if vote != DISCARDED]
        if pairs:
            confusion = confusion_matrix([p for p, _ in pairs], [v for _, v in pairs])
            reports.write_confusion_csv(confusion, rt.artifact("agreement", "confusion.csv"))
    report = agreement_report(labels_by_item, model_labels)
    reports.write_agreement(
        report,
        rt.artifact("agreement", "agreement.csv"),
        rt.artifact("agreement", "agreement.md"),
        confusion,
    )
    rt.ledger.record("agreement", processed=len(annotated),
                     discarded=report.discarded_count)
    rt.mark_complete("agreement", inputs, {})
    log.info("agreement: %d items, %d discarded by majority vote",
             report.item_count, report.discarded_count)


def stage_generate(rt: Runtime) -> None:
    cfg = rt.cfg
    ctx_path = rt.require("ingest", "contexts.jsonl")
    options = {
        "labels": [l.value for l in cfg.generate.labels],
        "method": cfg.generate.method,
        "seed": cfg.generate.seed,
        "label_output": cfg.generate.label_output,
        "use_theme": cfg.generate.use_theme,
        "model": cfg.chat.model_id,
    }
    if rt.should_skip("generate", [ctx_path], options):
        log.info("generate: up to date, skipping")
        return
    contexts = ingest_contexts(ctx_path)
    generated = []
    failed = 0
    for ctx in contexts:
        if cfg.generate.method == "simple_prompt":
            try:
                generated.append(generate_simple_qa(ctx, rt.chat_gw))
            except GenerationError as exc:
                failed += 1
                log.warning("generate: %s on context %s", exc, ctx.id)
            continue
        kinds = tuple(LABEL_TO_KIND[l] for l in cfg.generate.labels)
        try:
            sset = build_statement_set(ctx, rt.chat_gw, kinds=kinds)
        except GenerationError as exc:
            failed += len(cfg.generate.labels)
            log.warning("generate: %s on context %s", exc, ctx.id)
            continue
        for offset, label in enumerate(cfg.generate.labels):
            try:
                generated.append(
                    generate_labeled_qa(
                        ctx, label, cfg.generate.seed + offset, rt.chat_gw,
                        statement_set=sset, use_theme=cfg.generate.use_theme,
                    )
                )
            except GenerationError as exc:
                failed += 1
                log.warning("generate: %s on context %s", exc, ctx.id)
    if cfg.generate.label_output and generated:
        by_id = {c.id: c for c in contexts}
        label_dataset(generated, by_id, rt.chat_gw, dataset_name=cfg.corpus.dataset_name)
    write_qas(generated, rt.artifact("generate", "generated_qas.jsonl"))
    rt.ledger.record("generate", processed=len(generated), failed=failed)
    rt.mark_complete("generate", [ctx_path], options)
    log.info("generate: %d records, %d failures", len(generated), failed)


def _union_qas(rt: Runtime) -> list:
    """Labelled ingested records plus generated records, if present."""
    paths = []
    if rt.artifact("label", "qas_labelled.jsonl").exists():
        paths.append(rt.artifact("label", "qas_labelled.jsonl"))
    elif rt.artifact("ingest", "qas.jsonl").exists():
        paths.append(rt.artifact("ingest", "qas.jsonl"))
    if rt.artifact("generate", "generated_qas.jsonl").exists():
        paths.append(rt.artifact("generate", "generated_qas.jsonl"))
    if not paths:
        raise StageFailure("no Q&A artifacts found; run label or generate first")
    records = []
    seen = set()
    for path in paths:
        for rec in ingest_qas(path):
            if rec.id not in seen:
                seen.add(rec.id)
                records.append(rec)
    return records


def stage_critique(rt: Runtime) -> None:
    ctx_path = rt.require("ingest", "contexts.jsonl")
    records = _union_qas(rt)
    contexts = ingest_contexts(ctx_path)
    by_id = {c.id: c for c in contexts}
    options = {"criteria": [c.value for c in rt.cfg.criteria],
               "model": rt.cfg.chat.model_id}
    input_paths = [ctx_path] + [
        p for p in (rt.artifact("label", "qas_labelled.jsonl"),
                    rt.artifact("generate", "generated_qas.jsonl"),
                    rt.artifact("ingest", "qas.jsonl"))
        if p.exists()
    ]
    if rt.should_skip("critique", input_paths, options):
        log.info("critique: up to date, skipping")
        return
    report = critique_suite(records, by_id, rt.cfg.criteria, rt.chat_gw)
    write_qas(records, rt.artifact("critique", "qas_critiqued.jsonl"))
    reports.write_suite(report, rt.artifact("critique", "suite.csv"),
                        rt.artifact("critique", "suite.md"))
    rt.ledger.record("critique", processed=len(records) - report.failures,
                     failed=report.failures)
    rt.mark_complete("critique", input_paths, options)
    log.info("critique: %d records, %d failed critiques", len(records), report.failures)


def stage_filter(rt: Runtime) -> None:
    qas_path = rt.latest_qas_path(("critique", "generate", "label", "ingest"))
    policy = rt.cfg.filter_policy
    options = {
        "drop_unanswerable": policy.drop_unanswerable,
        "min_scaled": {c.value: v for c, v in policy.min_scaled.items()},
    }
    if rt.should_skip("filter", [qas_path], options):
        log.info("filter: up to date, skipping")
        return
    records = ingest_qas(qas_path)
    kept, dropped = filter_records(records, policy)
    write_qas(kept, rt.artifact("filter", "kept.jsonl"))
    dropped_path = rt.artifact("filter", "dropped.jsonl")
    dropped_path.parent.mkdir(parents=True, exist_ok=True)
    with dropped_path.open("w", encoding="utf-8", newline="\n") as fh:
        for item in dropped:
            fh.write(json.dumps(
                {"id": item.record.id, "reasons": item.reasons},
                ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    rt.ledger.record("filter", processed=len(kept), discarded=len(dropped))
    rt.mark_complete("filter", [qas_path], options)
    log.info("filter: kept %d, dropped %d", len(kept), len(dropped))


def stage_bench(rt: Runtime) -> None:
    cfg = rt.cfg
    ctx_path = rt.require("ingest", "contexts.jsonl")
    qas_path = rt.latest_qas_path(("filter", "critique", "generate", "label", "ingest"))
    options = {
        "weights": cfg.bench.weights, "candidate_k": cfg.bench.candidate_k,
        "top_n": cfg.bench.top_n, "k1": cfg.bench.k1, "b": cfg.bench.b,
        "embed_model": cfg.embed.model_id, "embed_dim": cfg.embed_dim,
        "rerank": cfg.bench.rerank,
    }
    if rt.should_skip("bench", [ctx_path, qas_path], options):
        log.info("bench: up to date, skipping")
        return
    contexts = ingest_contexts(ctx_path)
    records = ingest_qas(qas_path)
    resolve_contexts(records, contexts)
    lexical = build_lexical_index(contexts, k1=cfg.bench.k1, b=cfg.bench.b)
    dense = build_dense_index(contexts, rt.embed_gw)
    params = HybridParams(candidate_k=cfg.bench.candidate_k, top_n=cfg.bench.top_n)
    bench_report = benchmark_by_label(
        cfg.corpus.dataset_name, records, lexical, dense, rt.embed_gw,
        params=params, weights=cfg.bench.weights,
        rerank_gateway=rt.rerank_gw if cfg.bench.rerank else None,
        passages={c.id: c.text for c in contexts} if cfg.bench.rerank else None,
    )
    reports.write_benchmark(bench_report.rows, bench_report.notes,
                            rt.artifact("bench", "benchmark.csv"),
                            rt.artifact("bench", "benchmark.md"),
                            scan_csv_path=rt.artifact("bench", "scan.csv"),
                            scans=bench_report.scans)
    rt.ledger.record("bench", processed=len(records))
    rt.mark_complete("bench", [ctx_path, qas_path], options)
    log.info("bench: %d rows over %d queries", len(bench_report.rows), len(records))


def stage_report(rt: Runtime) -> None:
    try:
        path = reports.emit_report(rt.cfg.run_dir)
    except FileNotFoundError as exc:
        raise StageFailure(str(exc)) from None
    rt.ledger.record("report", processed=1)
    log.info("report: wrote %s", path)


def stage_export_finetune(rt: Runtime) -> None:
    cfg = rt.cfg
    ctx_path = rt.require("ingest", "contexts.jsonl")
    qas_path = rt.latest_qas_path(("filter", "generate"))
    options = {"holdout": cfg.export.holdout,
               "validation_fraction": cfg.export.validation_fraction,
               "seed": cfg.export.seed}
    if rt.should_skip("export_finetune", [ctx_path, qas_path], options):
        log.info("export-finetune: up to date, skipping")
        return
    contexts = ingest_contexts(ctx_path)
    records = [r for r in ingest_qas(qas_path) if r.requested_label is not None]
    if not records:
        raise StageFailure("no records carry requested_label; generate first")
    by_id = {c.id: c for c in contexts}
    train, val = export_finetune_dataset(
        records, by_id, cfg.export.holdout,
        rt._stage_dir("export_finetune"),
        validation_fraction=cfg.export.validation_fraction,
        seed=cfg.export.seed,
    )
    rt.ledger.record("export_finetune", processed=len(records))
    rt.mark_complete("export_finetune", [ctx_path, qas_path], options)
    log.info("export-finetune: %s / %s", train, val)


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "label": stage_label,
    "agreement": stage_agreement,
    "generate": stage_generate,
    "critique": stage_critique,
    "filter": stage_filter,
    "bench": stage_bench,
    "report": stage_report,
    "export-finetune": stage_export_finetune,
}


# ---------------------------------------------------------------------------
# argument parsing and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragatlas",
        description="Label, generate, critique, filter, and benchmark RAG Q&A data.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} stage")
        cmd.add_argument("--config", required=True, help="path to the run config file")
        cmd.add_argument("--run-dir", help="override run_dir from the config")
        cmd.add_argument("--force", action="store_true",
                         help="re-run even if the stage is up to date")
        if name == "generate":
            cmd.add_argument("--seed", type=int, help="override generate.seed")
            cmd.add_argument("--method",
                             choices=("statement_extraction", "simple_prompt"),
                             help="override generate.method")
        if name == "agreement":
            cmd.add_argument("--annotations", help="override corpus.annotations")
        if name == "bench":
            cmd.add_argument("--top-n", type=int, help="override bench.top_n")
            cmd.add_argument("--candidate-k", type=int, help="override bench.candidate_k")
        if name == "export-finetune":
            cmd.add_argument("--holdout", help="override export_finetune.holdout")
            cmd.add_argument("--validation-fraction", type=float,
                             help="override export_finetune.validation_fraction")
            cmd.add_argument("--seed", type=int, help="override export_finetune.seed")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "run_dir", None):
        cfg.run_dir = Path(args.run_dir)
    if getattr(args, "annotations", None):
        cfg.corpus.annotations = Path(args.annotations)
    if args.command == "generate":
        if args.seed is not None:
            cfg.generate.seed = args.seed
        if args.method:
            cfg.generate.method = args.method
    if args.command == "bench":
        if args.top_n is not None:
            cfg.bench.top_n = args.top_n
        if args.candidate_k is not None:
            cfg.bench.candidate_k = args.candidate_k
    if args.command == "export-finetune":
        if args.holdout:
            cfg.export.holdout = args.holdout
        if args.validation_fraction is not None:
            cfg.export.validation_fraction = args.validation_fraction
        if args.seed is not None:
            cfg.export.seed = args.seed
    return cfg.validate()


def _write_error_summary(run_dir: Path, command: str, error: str) -> None:
    try:
        path = run_dir / "run_meta" / "last_error.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"command": command, "error": error},
                                   sort_keys=True) + "\n", encoding="utf-8")
    except OSError:
        pass


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return 2

    started = time.monotonic()
    rt = Runtime(cfg=cfg, force=getattr(args, "force", False))
    try:
        STAGE_FUNCS[args.command](rt)
    except (StageFailure, CorpusError, GenerationError, RetrievalError,
            GatewayError, CritiqueError, LabelError) as exc:
        log.error("%s failed: %s", args.command, exc)
        _write_error_summary(cfg.run_dir, args.command, str(exc))
        rt.finish()
        return 1
    rt.finish()
    log.info("%s completed in %.2fs", args.command, time.monotonic() - started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
