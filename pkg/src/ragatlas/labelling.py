"""Zero-shot taxonomy labelling and inter-annotator agreement statistics.

The labeller sends one prompt per (context, question) pair describing the
four classes, parses the judged label out of the reply, and retries once on
a malformed or out-of-vocabulary answer before marking the record failed.
Agreement between annotators (or between the model and annotators) uses the
two-rater form of Fleiss' 1971 kappa over the four categories.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .gateway import GatewayError, LlmGateway, extract_structured_payload
from .prompts_io import load_template, render
from .records import (
    LABEL_ORDER,
    ContextRecord,
    CorpusError,
    DatasetManifest,
    LabelClass,
    QARecord,
    label_composition,
)

DISCARDED = "discarded"

LABEL_FAILED_KEY = "label_failed"


class LabelError(RuntimeError):
    """The judge reply could not be turned into a label after one re-ask."""


@dataclass
class LabelJudgement:
    label: LabelClass
    reason: str = ""


def render_label_prompt(context: str, question: str) -> str:
    if not context or not question:
        raise ValueError("context and question must both be non-empty")
    return render(load_template("label"), context=context, question=question)


def _parse_judgement(reply: str) -> LabelJudgement:
    payload = extract_structured_payload(reply)
    raw = payload.get("label_name")
    if not isinstance(raw, str):
        raise LabelError(f"reply has no label_name: {reply[:120]!r}")
    try:
        label = LabelClass(raw.strip())
    except ValueError:
        raise LabelError(f"unknown label {raw!r}") from None
    return LabelJudgement(label=label, reason=str(payload.get("reason", "")))


def classify_pair(context: str, question: str, gateway: LlmGateway) -> LabelJudgement:
    """Label one pair, retrying once on an invalid reply."""
    prompt = render_label_prompt(context, question)
    last_error: Exception | None = None
    for _ in range(2):
        reply = gateway.chat(prompt).text
        try:
            return _parse_judgement(reply)
        except (LabelError, GatewayError) as exc:
            last_error = exc
    raise LabelError(f"labelling failed after re-ask: {last_error}")


@dataclass
class LabelRunResult:
    records: list[QARecord]
    manifest: DatasetManifest
    failed_ids: list[str] = field(default_factory=list)


def label_dataset(
    qa_records: Sequence[QARecord],
    contexts: Mapping[str, ContextRecord],
    gateway: LlmGateway,
    dataset_name: str = "corpus",
) -> LabelRunResult:
    """Set predicted_label on every record the judge handles.

    Per-record failures are collected, never raised; the manifest's
    composition covers successfully labelled records only.
    """
    failed: list[str] = []
    labelled: list[LabelClass] = []
    for qa in qa_records:
        ctx = contexts.get(qa.context_id)
        if ctx is None:
            raise CorpusError(f"qa {qa.id!r}: unresolved context_id {qa.context_id!r}")
        try:
            judgement = classify_pair(ctx.text, qa.question, gateway)
        except LabelError:
            qa.extra[LABEL_FAILED_KEY] = True
            failed.append(qa.id)
            continue
        qa.predicted_label = judgement.label
        labelled.append(judgement.label)
    manifest = DatasetManifest(
        name=dataset_name,
        context_count=len(contexts),
        qa_count=len(qa_records),
        label_composition=label_composition(labelled),
    ).validate()
    return LabelRunResult(records=list(qa_records), manifest=manifest, failed_ids=failed)


# ---------------------------------------------------------------------------
# agreement statistics


def majority_vote(labels: Sequence[LabelClass]) -> LabelClass | str:
    """Label held by strictly more than half the raters, else DISCARDED."""
    if len(labels) < 2:
        raise ValueError("majority vote needs at least 2 labels")
    counts: dict[LabelClass, int] = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    best, best_count = max(counts.items(), key=lambda kv: kv[1])
    if best_count * 2 > len(labels):
        return best
    return DISCARDED


def fleiss_kappa(rater_a: Sequence[LabelClass], rater_b: Sequence[LabelClass]) -> float:
    """Fleiss' kappa for two raters over the four label categories.

    Degenerate input (both raters using one identical category throughout)
    makes the formula 0/0; that case is reported as perfect agreement, 1.0.
    """
    kappa, _ = fleiss_kappa_detail(rater_a, rater_b)
    return kappa


def fleiss_kappa_detail(
    rater_a: Sequence[LabelClass], rater_b: Sequence[LabelClass]
) -> tuple[float, bool]:
    """(kappa, degenerate) — degenerate marks the chance-agreement=1 case."""
    if len(rater_a) != len(rater_b):
        raise ValueError(f"rater lengths differ: {len(rater_a)} vs {len(rater_b)}")
    if not rater_a:
        raise ValueError("need at least one item")
    n_items = len(rater_a)
    n_raters = 2

    # per-item category counts
    cat_index = {lab: i for i, lab in enumerate(LABEL_ORDER)}
    totals = [0] * len(LABEL_ORDER)
    agree_sum = 0.0
    for a, b in zip(rater_a, rater_b):
        counts = [0] * len(LABEL_ORDER)
        counts[cat_index[a]] += 1
        counts[cat_index[b]] += 1
        agree_sum += (sum(c * c for c in counts) - n_raters) / (n_raters * (n_raters - 1))
        for j, c in enumerate(counts):
            totals[j] += c
    p_bar = agree_sum / n_items
    assignments = n_items * n_raters
    p_e = sum((t / assignments) ** 2 for t in totals)
    if abs(1.0 - p_e) < 1e-15:
        return 1.0, True
    kappa = (p_bar - p_e) / (1.0 - p_e)
    return kappa, False


@dataclass
class ConfusionMatrix:
    """Counts and row-normalized rates indexed (reference, predicted)."""

    counts: list[list[int]]
    row_normalized: list[list[float]]
    labels: tuple[LabelClass, ...] = LABEL_ORDER

    def to_dict(self) -> dict:
        return {
            "labels": [l.value for l in self.labels],
            "counts": self.counts,
            "row_normalized": self.row_normalized,
        }


def confusion_matrix(
    predicted: Sequence[LabelClass], reference: Sequence[LabelClass]
) -> ConfusionMatrix:
    if len(predicted) != len(reference):
        raise ValueError(f"length mismatch: {len(predicted)} vs {len(reference)}")
    idx = {lab: i for i, lab in enumerate(LABEL_ORDER)}
    k = len(LABEL_ORDER)
    counts = [[0] * k for _ in range(k)]
    for pred, ref in zip(predicted, reference):
        counts[idx[ref]][idx[pred]] += 1
    normalized = []
    for row in counts:
        total = sum(row)
        normalized.append([c / total for c in row] if total else [0.0] * k)
    return ConfusionMatrix(counts=counts, row_normalized=normalized)


# ---------------------------------------------------------------------------
# annotator files and reports


def ingest_annotator_labels(path: str | Path) -> dict[str, dict[int, LabelClass]]:
    """Read {qa_id, annotator_index, label} lines into qa_id -> index -> label."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"no such file: {path}")
    table: dict[str, dict[int, LabelClass]] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                qa_id = str(row["qa_id"])
                idx = int(row["annotator_index"])
                label = LabelClass.parse(str(row["label"]))
            except (json.JSONDecodeError, KeyError, ValueError, CorpusError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad annotator row ({exc})") from None
            table.setdefault(qa_id, {})[idx] = label
    return table


def attach_annotator_labels(
    qas: Sequence[QARecord], table: Mapping[str, Mapping[int, LabelClass]]
) -> int:
    """Fill annotator_labels (positional) on records present in the table.

    Only records covered by a contiguous 0..k index set are filled; returns
    the number of records updated.
    """
    updated = 0
    for qa in qas:
        per_rater = table.get(qa.id)
        if not per_rater:
            continue
        indices = sorted(per_rater)
        if indices != list(range(len(indices))):
            raise CorpusError(
                f"qa {qa.id!r}: annotator indices {indices} are not contiguous from 0"
            )
        qa.annotator_labels = [per_rater[i] for i in indices]
        updated += 1
    return updated


@dataclass
class AgreementReport:
    """Leave-one-out agreement per annotator, plus optional model rows.

    ``kappas[i]`` compares annotator i against the majority of the others;
    ``model_kappas[i]`` compares the model's predicted labels against that
    same leave-one-out majority. ``discarded_count`` counts items whose
    full-panel majority vote found no consensus.
    """

    item_count: int
    discarded_count: int
    kappas: dict[int, float] = field(default_factory=dict)
    model_kappas: dict[int, float] = field(default_factory=dict)

    def validate(self) -> "AgreementReport":
        if self.discarded_count > self.item_count:
            raise ValueError("discarded_count exceeds item_count")
        for value in list(self.kappas.values()) + list(self.model_kappas.values()):
            if not -1.0 - 1e-9 <= value <= 1.0 + 1e-9:
                raise ValueError(f"kappa {value} outside [-1, 1]")
        return self

    def relative_drops(self) -> dict[int, float]:
        """1 - kappa(model)/kappa(annotator) per annotator, where defined."""
        out = {}
        for i, base in self.kappas.items():
            if i in self.model_kappas and base != 0:
                out[i] = 1.0 - self.model_kappas[i] / base
        return out


def agreement_report(
    labels_by_item: Sequence[Sequence[LabelClass]],
    model_labels: Sequence[LabelClass] | None = None,
) -> AgreementReport:
    """Compute leave-one-out kappas from an items x annotators label table."""
    if not labels_by_item:
        return AgreementReport(item_count=0, discarded_count=0).validate()
    n_raters = len(labels_by_item[0])
    if n_raters < 2:
        raise ValueError("need at least 2 annotators")
    if any(len(row) != n_raters for row in labels_by_item):
        raise ValueError("annotator table is ragged")
    if model_labels is not None and len(model_labels) != len(labels_by_item):
        raise ValueError("model labels must align with the item table")

    discarded = sum(
        1 for row in labels_by_item if majority_vote(row) == DISCARDED
    )

    kappas: dict[int, float] = {}
    model_kappas: dict[int, float] = {}
    for i in range(n_raters):
        own: list[LabelClass] = []
        loo_majority: list[LabelClass] = []
        model_seq: list[LabelClass] = []
        for item_idx, row in enumerate(labels_by_item):
            others = [lab for j, lab in enumerate(row) if j != i]
            vote = majority_vote(others) if len(others) >= 2 else others[0]
            if vote == DISCARDED:
                continue
            own.append(row[i])
            loo_majority.append(vote)
            if model_labels is not None:
                model_seq.append(model_labels[item_idx])
        if own:
            kappas[i] = fleiss_kappa(own, loo_majority)
            if model_labels is not None:
                model_kappas[i] = fleiss_kappa(model_seq, loo_majority)
    return AgreementReport(
        item_count=len(labels_by_item),
        discarded_count=discarded,
        kappas=kappas,
        model_kappas=model_kappas,
    ).validate()


def consensus_labels(
    labels_by_item: Sequence[Sequence[LabelClass]],
) -> list[LabelClass | str]:
    """Full-panel majority vote per item; non-consensus items are DISCARDED."""
    return [majority_vote(row) for row in labels_by_item]
