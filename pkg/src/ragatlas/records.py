"""Core record types and line-delimited corpus I/O.

A corpus is a pair of UTF-8 JSONL files: one context record per line and one
Q&A record per line. Unknown keys on either record survive a read/write
round-trip untouched, so third-party annotations can ride along.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

MAX_CONTEXT_CHARS = 10_000


class CorpusError(ValueError):
    """Malformed corpus data (bad row, duplicate id, broken reference)."""


class LabelClass(str, Enum):
    """Four-way classification of what a context offers its question."""

    FACT_SINGLE = "fact_single"
    SUMMARY = "summary"
    REASONING = "reasoning"
    UNANSWERABLE = "unanswerable"

    @classmethod
    def parse(cls, value: str) -> "LabelClass":
        try:
            return cls(value)
        except ValueError:
            raise CorpusError(
                f"unknown label {value!r}; expected one of "
                f"{[m.value for m in cls]}"
            ) from None


LABEL_ORDER: tuple[LabelClass, ...] = (
    LabelClass.FACT_SINGLE,
    LabelClass.SUMMARY,
    LabelClass.REASONING,
    LabelClass.UNANSWERABLE,
)

GENERATION_METHODS = ("human", "simple_prompt", "statement_extraction", "finetuned_model")


@dataclass
class ContextRecord:
    """One retrievable passage."""

    id: str
    text: str
    source: str = ""
    meta: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def validate(self) -> "ContextRecord":
        if not self.id:
            raise CorpusError("context id must be non-empty")
        if not self.text:
            raise CorpusError(f"context {self.id!r}: text must be non-empty")
        return self

    def to_dict(self) -> dict:
        out = {"id": self.id, "text": self.text, "source": self.source, "meta": self.meta}
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, row: Mapping) -> "ContextRecord":
        known = {"id", "text", "source", "meta"}
        rec = cls(
            id=str(row.get("id", "")),
            text=str(row.get("text", "")),
            source=str(row.get("source", "") or ""),
            meta=dict(row.get("meta") or {}),
            extra={k: v for k, v in row.items() if k not in known},
        )
        return rec.validate()


@dataclass
class CritiqueResult:
    """One judge verdict: a 1..5 rating and its 0..5 rescaling."""

    criterion: str
    raw: int
    scaled: float
    evaluation: str = ""

    def to_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "raw": self.raw,
            "scaled": self.scaled,
            "evaluation": self.evaluation,
        }

    @classmethod
    def from_dict(cls, row: Mapping) -> "CritiqueResult":
        return cls(
            criterion=str(row["criterion"]),
            raw=int(row["raw"]),
            scaled=float(row["scaled"]),
            evaluation=str(row.get("evaluation", "")),
        )


@dataclass
class QARecord:
    """A (context, question, answer) triplet with label and critique slots.

    ``annotator_labels`` is positional: index i is annotator i's label.
    ``statement_kind`` is set only on statement-extraction generations.
    """

    id: str
    context_id: str
    question: str
    answer: str = ""
    requested_label: LabelClass | None = None
    predicted_label: LabelClass | None = None
    annotator_labels: list[LabelClass] = field(default_factory=list)
    method: str = "human"
    critiques: dict[str, CritiqueResult] = field(default_factory=dict)
    statement_kind: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> "QARecord":
        if not self.id:
            raise CorpusError("qa id must be non-empty")
        if not self.context_id:
            raise CorpusError(f"qa {self.id!r}: context_id must be non-empty")
        if not self.question:
            raise CorpusError(f"qa {self.id!r}: question must be non-empty")
        if self.method not in GENERATION_METHODS:
            raise CorpusError(f"qa {self.id!r}: unknown method {self.method!r}")
        return self

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "context_id": self.context_id,
            "question": self.question,
            "answer": self.answer,
            "requested_label": self.requested_label.value if self.requested_label else None,
            "predicted_label": self.predicted_label.value if self.predicted_label else None,
            "annotator_labels": [l.value for l in self.annotator_labels],
            "method": self.method,
            "critiques": {k: v.to_dict() for k, v in sorted(self.critiques.items())},
        }
        if self.statement_kind is not None:
            out["statement_kind"] = self.statement_kind
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, row: Mapping) -> "QARecord":
        known = {
            "id", "context_id", "question", "answer", "requested_label",
            "predicted_label", "annotator_labels", "method", "critiques",
            "statement_kind",
        }
        req = row.get("requested_label")
        pred = row.get("predicted_label")
        rec = cls(
            id=str(row.get("id", "")),
            context_id=str(row.get("context_id", "")),
            question=str(row.get("question", "")),
            answer=str(row.get("answer", "") or ""),
            requested_label=LabelClass.parse(req) if req else None,
            predicted_label=LabelClass.parse(pred) if pred else None,
            annotator_labels=[LabelClass.parse(l) for l in row.get("annotator_labels") or []],
            method=str(row.get("method", "human")),
            critiques={
                k: CritiqueResult.from_dict(v)
                for k, v in (row.get("critiques") or {}).items()
            },
            statement_kind=row.get("statement_kind"),
            extra={k: v for k, v in row.items() if k not in known},
        )
        return rec.validate()


@dataclass
class DatasetManifest:
    """Headline counts for a corpus plus its label composition.

    ``label_composition`` holds only labels that actually occur; fractions
    over a non-empty label set sum to 1 within 1e-9.
    """

    name: str
    context_count: int = 0
    qa_count: int = 0
    label_composition: dict[LabelClass, float] = field(default_factory=dict)

    def validate(self) -> "DatasetManifest":
        if self.context_count < 0 or self.qa_count < 0:
            raise CorpusError("manifest counts must be non-negative")
        if self.label_composition:
            total = sum(self.label_composition.values())
            if abs(total - 1.0) > 1e-9:
                raise CorpusError(f"label composition sums to {total}, not 1")
        return self

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "context_count": self.context_count,
            "qa_count": self.qa_count,
            "label_composition": {
                k.value: v for k, v in sorted(
                    self.label_composition.items(), key=lambda kv: kv[0].value
                )
            },
        }


def label_composition(labels: Iterable[LabelClass]) -> dict[LabelClass, float]:
    """Fractions per label over the given labels; empty input gives {}."""
    counts: dict[LabelClass, int] = {}
    n = 0
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
        n += 1
    if n == 0:
        return {}
    return {lab: c / n for lab, c in counts.items()}


# ---------------------------------------------------------------------------
# line-delimited I/O


def _iter_jsonl(path: Path) -> Iterable[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(row, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object per line")
            yield lineno, row


def ingest_contexts(path: str | Path, format: str = "jsonl") -> list[ContextRecord]:
    """Load context records, rejecting duplicate ids and invalid rows.

    ``format`` is ``jsonl`` (one object per line) or ``csv`` (columns id,
    text, source, meta where meta is a JSON object). Errors name the
    offending row.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    records: list[ContextRecord] = []
    seen: set[str] = set()

    if format == "jsonl":
        rows: Iterable[tuple[int, Mapping]] = _iter_jsonl(path)
    elif format == "csv":
        def _csv_rows() -> Iterable[tuple[int, Mapping]]:
            with path.open("r", encoding="utf-8", newline="") as fh:
                reader = csv.DictReader(fh)
                for lineno, row in enumerate(reader, start=2):
                    # short rows pad with None; overlong rows key extras by None
                    row = {k: ("" if v is None else v)
                           for k, v in row.items() if k is not None}
                    if row.get("meta"):
                        try:
                            row["meta"] = json.loads(row["meta"])
                        except json.JSONDecodeError:
                            raise CorpusError(
                                f"{path}:{lineno}: meta column is not JSON"
                            ) from None
                    else:
                        row["meta"] = {}
                    yield lineno, row
        rows = _csv_rows()
    else:
        raise CorpusError(f"unknown corpus format {format!r}")

    for lineno, row in rows:
        if "id" not in row or "text" not in row:
            raise CorpusError(f"{path}:{lineno}: row missing id or text")
        try:
            rec = ContextRecord.from_dict(row)
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
        if rec.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate context id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def ingest_qas(path: str | Path) -> list[QARecord]:
    """Load Q&A records from JSONL, rejecting duplicates and invalid rows."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    records: list[QARecord] = []
    seen: set[str] = set()
    for lineno, row in _iter_jsonl(path):
        try:
            rec = QARecord.from_dict(row)
        except (CorpusError, KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from None
        if rec.id in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate qa id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def write_contexts(records: Sequence[ContextRecord], path: str | Path) -> None:
    _write_jsonl(Path(path), (r.to_dict() for r in records))


def write_qas(records: Sequence[QARecord], path: str | Path) -> None:
    _write_jsonl(Path(path), (r.to_dict() for r in records))


def resolve_contexts(
    qas: Sequence[QARecord], contexts: Sequence[ContextRecord]
) -> dict[str, ContextRecord]:
    """Index contexts by id and check every QA points at one."""
    by_id = {c.id: c for c in contexts}
    for qa in qas:
        if qa.context_id not in by_id:
            raise CorpusError(f"qa {qa.id!r}: unresolved context_id {qa.context_id!r}")
    return by_id
