import json
from pathlib import Path

import yaml

from ragatlas.cli import main
from ragatlas.records import ingest_qas

from conftest import make_contexts, make_qas


def make_workspace(tmp_path: Path, *, n_contexts: int = 6) -> Path:
    contexts = make_contexts(n_contexts, seed=4, source="fixture")
    qas = make_qas(contexts, seed=4)
    data = tmp_path / "data"
    data.mkdir()
    with (data / "contexts.jsonl").open("w", encoding="utf-8") as fh:
        for c in contexts:
            fh.write(json.dumps(c.to_dict(), sort_keys=True) + "\n")
    with (data / "qas.jsonl").open("w", encoding="utf-8") as fh:
        for q in qas:
            fh.write(json.dumps(q.to_dict(), sort_keys=True) + "\n")
    annotations = []
    panel = ["fact_single", "fact_single", "summary", "fact_single"]
    for qa in qas:
        for idx, label in enumerate(panel):
            annotations.append({"qa_id": qa.id, "annotator_index": idx, "label": label})
    with (data / "annotations.jsonl").open("w", encoding="utf-8") as fh:
        for row in annotations:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    config = {
        "run_dir": str(tmp_path / "run"),
        "gateway": {"backend": "scripted", "embed_dim": 16},
        "corpus": {
            "contexts": str(data / "contexts.jsonl"),
            "qas": str(data / "qas.jsonl"),
            "annotations": str(data / "annotations.jsonl"),
            "dataset_name": "fixture",
        },
        "generate": {"labels": ["fact_single", "summary", "reasoning"], "seed": 11},
        "bench": {"top_n": 3, "candidate_k": 10},
        "export_finetune": {"holdout": "other", "seed": 3},
    }
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return cfg_path


def run_ok(cfg: Path, command: str, *extra: str) -> None:
    assert main([command, "--config", str(cfg), *extra]) == 0


def test_invalid_config_exits_2(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("corpus:\n  contexts: /nonexistent/path.jsonl\n", encoding="utf-8")
    assert main(["ingest", "--config", str(cfg)]) == 2
    assert not (tmp_path / "run").exists()


def test_missing_config_exits_2(tmp_path):
    assert main(["ingest", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_stage_failure_exits_1_with_summary(tmp_path):
    cfg = make_workspace(tmp_path)
    # label requires ingest artifacts
    assert main(["label", "--config", str(cfg)]) == 1
    summary = json.loads(
        (tmp_path / "run" / "run_meta" / "last_error.json").read_text()
    )
    assert summary["command"] == "label"
    assert "ingest" in summary["error"]


def test_ingest_label_bench_report_chain(tmp_path):
    cfg = make_workspace(tmp_path)
    run = tmp_path / "run"
    run_ok(cfg, "ingest")
    assert (run / "ingest" / "contexts.jsonl").exists()
    run_ok(cfg, "label")
    labelled = ingest_qas(run / "label" / "qas_labelled.jsonl")
    assert all(q.predicted_label or q.extra.get("label_failed") for q in labelled)
    comp = (run / "label" / "composition.csv").read_text()
    assert comp.splitlines()[0] == "dataset,label,fraction"
    run_ok(cfg, "agreement")
    assert (run / "agreement" / "agreement.csv").exists()
    run_ok(cfg, "bench")
    bench_csv = (run / "bench" / "benchmark.csv").read_text().splitlines()
    assert bench_csv[0] == "dataset,label,dense,lexical,best_recall,best_strategy,queries"
    assert any(line.startswith("fixture,Inclusive") for line in bench_csv[1:])
    scan_csv = (run / "bench" / "scan.csv").read_text().splitlines()
    assert scan_csv[0] == "label,text_weight,recall"
    assert sum(1 for l in scan_csv[1:] if l.startswith("Inclusive,")) == 6
    run_ok(cfg, "report")
    report = (run / "report" / "report.md").read_text()
    assert "Label composition" in report
    assert "Retrieval benchmark" in report
    assert "Not available" in report  # critique stage was never run


def test_generate_critique_filter_export_chain(tmp_path):
    cfg = make_workspace(tmp_path, n_contexts=4)
    run = tmp_path / "run"
    run_ok(cfg, "ingest")
    run_ok(cfg, "generate")
    generated = ingest_qas(run / "generate" / "generated_qas.jsonl")
    assert generated and all(g.method == "statement_extraction" for g in generated)
    assert all(g.requested_label is not None for g in generated)
    assert all(g.predicted_label is not None for g in generated)
    run_ok(cfg, "critique")
    critiqued = ingest_qas(run / "critique" / "qas_critiqued.jsonl")
    assert any(rec.critiques for rec in critiqued)
    suite = (run / "critique" / "suite.csv").read_text().splitlines()
    assert suite[0] == "label,criterion,method,mean_scaled,n"
    run_ok(cfg, "filter")
    kept = ingest_qas(run / "filter" / "kept.jsonl")
    dropped = (run / "filter" / "dropped.jsonl").read_text().splitlines()
    assert len(kept) + len(dropped) == len(critiqued)
    run_ok(cfg, "export-finetune")
    train = run / "export_finetune" / "holdout_other" / "train.jsonl"
    assert train.exists()
    first = json.loads(train.read_text().splitlines()[0])
    assert first["input"].startswith("<<")
    assert " <a> " in first["output"]


def test_bench_with_rerank_enabled(tmp_path):
    cfg_path = make_workspace(tmp_path)
    raw = yaml.safe_load(cfg_path.read_text())
    raw["bench"]["rerank"] = True
    cfg_path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    run_ok(cfg_path, "ingest")
    run_ok(cfg_path, "label")
    run_ok(cfg_path, "bench")
    bench_csv = (tmp_path / "run" / "bench" / "benchmark.csv").read_text()
    assert "Inclusive" in bench_csv


def test_resume_skips_completed_stage(tmp_path, caplog):
    cfg = make_workspace(tmp_path)
    run_ok(cfg, "ingest")
    marker = tmp_path / "run" / "ingest" / ".complete"
    original = marker.read_text()
    with caplog.at_level("INFO", logger="ragatlas"):
        run_ok(cfg, "ingest")
    assert "skipping" in caplog.text
    assert marker.read_text() == original
    # --force re-runs the stage
    with caplog.at_level("INFO", logger="ragatlas"):
        run_ok(cfg, "ingest", "--force")
    assert "ingest: 6 contexts" in caplog.text


def test_inputs_never_mutated(tmp_path):
    cfg = make_workspace(tmp_path)
    data = tmp_path / "data"
    before = {p.name: p.read_bytes() for p in data.iterdir()}
    for cmd in ("ingest", "label", "bench", "report"):
        run_ok(cfg, cmd)
    after = {p.name: p.read_bytes() for p in data.iterdir()}
    assert before == after


def test_ledger_counts_consistent(tmp_path):
    cfg = make_workspace(tmp_path)
    run_ok(cfg, "ingest")
    run_ok(cfg, "label")
    ledger = json.loads((tmp_path / "run" / "run_meta" / "ledger.json").read_text())
    for stage, counts in ledger["stages"].items():
        assert counts["processed"] + counts["failed"] + counts["discarded"] == counts["input"]
    assert ledger["token_usage"]["prompt_tokens"] > 0
