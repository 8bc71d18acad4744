"""CSV and markdown emission for manifests, agreement, benchmarks, critiques.

All writers are deterministic: fixed column orders, fixed float formats,
sorted rows, LF newlines. Reports regenerated from identical inputs are
byte-identical.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Sequence

from .critique import SuiteReport
from .labelling import AgreementReport, ConfusionMatrix
from .records import LABEL_ORDER, DatasetManifest
from .retrieval import BenchmarkRow


def _fmt(value: float, places: int = 3) -> str:
    return f"{value:.{places}f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def markdown_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines) + "\n"


# -- composition -------------------------------------------------------------


def composition_rows(manifest: DatasetManifest) -> list[list[str]]:
    comp = manifest.label_composition
    return [
        [manifest.name, label.value, _fmt(comp.get(label, 0.0))]
        for label in LABEL_ORDER
    ]


def write_composition(manifest: DatasetManifest, csv_path: Path, md_path: Path) -> None:
    header = ["dataset", "label", "fraction"]
    rows = composition_rows(manifest)
    _write_csv(csv_path, header, rows)
    md = (
        f"## Label composition: {manifest.name}\n\n"
        f"Contexts: {manifest.context_count}, Q&As: {manifest.qa_count}\n\n"
        + markdown_table(header, rows)
    )
    md_path.parent.mkdir(parents=True, exist_ok=True)
    md_path.write_text(md, encoding="utf-8")


# -- agreement ---------------------------------------------------------------


def write_agreement(
    report: AgreementReport,
    csv_path: Path,
    md_path: Path,
    confusion: ConfusionMatrix | None = None,
) -> None:
    header = ["annotator", "kappa_vs_loo_majority", "kappa_model_vs_loo_majority",
              "model_relative_drop"]
    drops = report.relative_drops()
    rows = []
    for i in sorted(report.kappas):
        model_kappa = report.model_kappas.get(i)
        rows.append([
            str(i),
            _fmt(report.kappas[i], 4),
            _fmt(model_kappa, 4) if model_kappa is not None else "",
            _fmt(drops[i], 4) if i in drops else "",
        ])
    _write_csv(csv_path, header, rows)

    parts = [
        "## Annotator agreement\n",
        f"\nItems: {report.item_count}; no-consensus items discarded by the "
        f"majority vote: {report.discarded_count}\n\n",
        markdown_table(header, rows),
    ]
    if confusion is not None:
        labels = [l.value for l in confusion.labels]
        conf_rows = [
            [ref] + [_fmt(confusion.row_normalized[r][c]) for c in range(len(labels))]
            for r, ref in enumerate(labels)
        ]
        parts.append("\n### Model vs consensus confusion (row-normalized)\n\n")
        parts.append(markdown_table(["reference \\ predicted"] + labels, conf_rows))
    md_path.parent.mkdir(parents=True, exist_ok=True)
    md_path.write_text("".join(parts), encoding="utf-8")


def write_confusion_csv(confusion: ConfusionMatrix, csv_path: Path) -> None:
    labels = [l.value for l in confusion.labels]
    header = ["reference"] + labels
    rows = [
        [ref] + [str(confusion.counts[r][c]) for c in range(len(labels))]
        for r, ref in enumerate(labels)
    ]
    _write_csv(csv_path, header, rows)


# -- benchmark ---------------------------------------------------------------

BENCH_HEADER = ["dataset", "label", "dense", "lexical", "best_recall",
                "best_strategy", "queries"]


def benchmark_rows(rows: Sequence[BenchmarkRow]) -> list[list[str]]:
    return [
        [r.dataset, r.label, _fmt(r.dense_recall), _fmt(r.lexical_recall),
         _fmt(r.best_recall), f"{r.best_weight:.2f}", str(r.query_count)]
        for r in rows
    ]


def write_benchmark(
    rows: Sequence[BenchmarkRow],
    notes: Sequence[str],
    csv_path: Path,
    md_path: Path,
    scan_csv_path: Path | None = None,
    scans: Mapping[str, Mapping[float, float]] | None = None,
) -> None:
    table = benchmark_rows(rows)
    _write_csv(csv_path, BENCH_HEADER, table)
    md = "## Retrieval benchmark (Recall@5)\n\n" + markdown_table(BENCH_HEADER, table)
    if notes:
        md += "\nNotes:\n" + "".join(f"- {note}\n" for note in notes)
    md_path.parent.mkdir(parents=True, exist_ok=True)
    md_path.write_text(md, encoding="utf-8")
    if scan_csv_path is not None and scans is not None:
        scan_rows = [
            [label, f"{w:.2f}", _fmt(recall)]
            for label in sorted(scans)
            for w, recall in sorted(scans[label].items())
        ]
        _write_csv(scan_csv_path, ["label", "text_weight", "recall"], scan_rows)


# -- critiques ---------------------------------------------------------------

SUITE_HEADER = ["label", "criterion", "method", "mean_scaled", "n"]


def write_suite(report: SuiteReport, csv_path: Path, md_path: Path) -> None:
    rows = [
        [r.label, r.criterion, r.method, _fmt(r.mean_scaled, 4), str(r.count)]
        for r in report.sorted_rows()
    ]
    _write_csv(csv_path, SUITE_HEADER, rows)
    md = "## Critique ratings by label and method\n\n" + markdown_table(SUITE_HEADER, rows)
    if report.failures:
        md += f"\nFailed critiques: {report.failures}\n"
    md_path.parent.mkdir(parents=True, exist_ok=True)
    md_path.write_text(md, encoding="utf-8")


# -- consolidated report -------------------------------------------------------


def read_csv_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        return [], []
    return rows[0], rows[1:]


def emit_report(run_dir: str | Path) -> Path:
    """Bundle the stage CSVs under ``run_dir`` into one report.md.

    Missing stages are noted, not fatal; identical inputs always produce a
    byte-identical report.
    """
    run_dir = Path(run_dir)
    sections: list[str] = ["# Run report\n"]
    sources = [
        ("Label composition", run_dir / "label" / "composition.csv"),
        ("Annotator agreement", run_dir / "agreement" / "agreement.csv"),
        ("Retrieval benchmark (Recall@5)", run_dir / "bench" / "benchmark.csv"),
        ("Critique ratings", run_dir / "critique" / "suite.csv"),
    ]
    missing = [p for _, p in sources if not p.exists()]
    if len(missing) == len(sources):
        raise FileNotFoundError(
            "no stage artifacts to report; missing: "
            + ", ".join(str(p) for p in missing)
        )
    for title, csv_path in sources:
        sections.append(f"\n## {title}\n\n")
        if not csv_path.exists():
            sections.append(f"_Not available: {csv_path.name} was not produced "
                            f"by an upstream stage._\n")
            continue
        header, rows = read_csv_table(csv_path)
        sections.append(markdown_table(header, rows))
    report_path = run_dir / "report" / "report.md"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text("".join(sections), encoding="utf-8")
    return report_path
