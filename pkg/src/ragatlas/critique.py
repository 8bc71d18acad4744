"""LLM-as-judge critiques, rating rescale, and threshold filtering.

Eight critique prompts cover question/answer/context quality angles; each
returns an integer rating 1..5 that is rescaled linearly onto 0..5 for
reporting (the two endpoints are fixed, the map between them is affine).
The default comparison suite is the four-criterion subset used for
generation-strategy comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .gateway import GatewayError, LlmGateway, extract_structured_payload
from .prompts_io import load_template, render
from .records import ContextRecord, CorpusError, CritiqueResult, LabelClass, QARecord


class Criterion(str, Enum):
    Q_TO_C_GROUNDEDNESS = "q_to_c_groundedness"
    A_TO_C_GROUNDEDNESS = "a_to_c_groundedness"
    Q_FEASIBILITY = "q_feasibility"
    STAND_ALONE = "stand_alone"
    Q_USEFULNESS = "q_usefulness"
    C_USEFULNESS = "c_usefulness"
    C_CLARITY = "c_clarity"
    QA_TAUTOLOGY = "qa_tautology"


# fields each critique prompt consumes
_CRITERION_SLOTS: dict[Criterion, tuple[str, ...]] = {
    Criterion.Q_TO_C_GROUNDEDNESS: ("question", "context"),
    Criterion.A_TO_C_GROUNDEDNESS: ("answer", "context"),
    Criterion.Q_FEASIBILITY: ("question", "context"),
    Criterion.STAND_ALONE: ("question",),
    Criterion.Q_USEFULNESS: ("question",),
    Criterion.C_USEFULNESS: ("context",),
    Criterion.C_CLARITY: ("context",),
    Criterion.QA_TAUTOLOGY: ("question", "answer"),
}

DEFAULT_SUITE = (
    Criterion.STAND_ALONE,
    Criterion.Q_FEASIBILITY,
    Criterion.Q_TO_C_GROUNDEDNESS,
    Criterion.A_TO_C_GROUNDEDNESS,
)


class CritiqueError(RuntimeError):
    """Judge reply unusable after one re-ask."""


def rescale(raw: int) -> float:
    """Affine map of 1..5 ratings onto 0..5: (raw - 1) * 1.25."""
    if raw not in (1, 2, 3, 4, 5):
        raise CritiqueError(f"rating {raw!r} outside 1..5")
    return (raw - 1) * 1.25


def _coerce_rating(value) -> int:
    """Accept ints, numeric strings, and floats within 0.01 of an integer."""
    if isinstance(value, bool):
        raise CritiqueError(f"rating {value!r} is not a number")
    if isinstance(value, int):
        number = float(value)
    else:
        try:
            number = float(str(value).strip())
        except (TypeError, ValueError):
            raise CritiqueError(f"rating {value!r} is not a number") from None
    nearest = round(number)
    if abs(number - nearest) > 0.01:
        raise CritiqueError(f"rating {value!r} is not an integer")
    if nearest not in (1, 2, 3, 4, 5):
        raise CritiqueError(f"rating {nearest} outside 1..5")
    return int(nearest)


def render_critique_prompt(
    criterion: Criterion,
    question: str = "",
    answer: str = "",
    context: str = "",
) -> str:
    slots = _CRITERION_SLOTS[criterion]
    values = {"question": question, "answer": answer, "context": context}
    for slot in slots:
        if not values[slot]:
            raise CritiqueError(f"{criterion.value} needs a non-empty {slot}")
    return render(load_template(criterion.value),
                  **{slot: values[slot] for slot in slots})


def critique(
    record: QARecord,
    context: ContextRecord,
    criterion: Criterion,
    gateway: LlmGateway,
) -> CritiqueResult:
    """Judge one record on one criterion, retrying once on a bad reply."""
    prompt = render_critique_prompt(
        criterion,
        question=record.question,
        answer=record.answer,
        context=context.text,
    )
    last: Exception | None = None
    for _ in range(2):
        reply = gateway.chat(prompt).text
        try:
            payload = extract_structured_payload(reply)
            raw = _coerce_rating(payload.get("rating"))
        except (GatewayError, CritiqueError) as exc:
            last = exc
            continue
        return CritiqueResult(
            criterion=criterion.value,
            raw=raw,
            scaled=rescale(raw),
            evaluation=str(payload.get("evaluation", "")),
        )
    raise CritiqueError(f"{criterion.value} critique failed after re-ask: {last}")


@dataclass
class SuiteRow:
    label: str
    criterion: str
    method: str
    mean_scaled: float
    count: int


@dataclass
class SuiteReport:
    rows: list[SuiteRow] = field(default_factory=list)
    failures: int = 0

    def sorted_rows(self) -> list[SuiteRow]:
        return sorted(self.rows, key=lambda r: (r.label, r.criterion, r.method))


def critique_suite(
    records: Sequence[QARecord],
    contexts: Mapping[str, ContextRecord],
    criteria: Sequence[Criterion],
    gateway: LlmGateway,
) -> SuiteReport:
    """Mean scaled rating per (label, criterion, method); stores results
    on each record's critiques map. Per-record failures are counted, the
    batch always completes."""
    sums: dict[tuple[str, str, str], tuple[float, int]] = {}
    failures = 0
    for rec in records:
        ctx = contexts.get(rec.context_id)
        if ctx is None:
            raise CorpusError(f"qa {rec.id!r}: unresolved context_id {rec.context_id!r}")
        label = rec.predicted_label.value if rec.predicted_label else "unlabelled"
        for criterion in criteria:
            try:
                result = critique(rec, ctx, criterion, gateway)
            except CritiqueError:
                failures += 1
                continue
            rec.critiques[criterion.value] = result
            key = (label, criterion.value, rec.method)
            total, count = sums.get(key, (0.0, 0))
            sums[key] = (total + result.scaled, count + 1)
    rows = [
        SuiteRow(label=k[0], criterion=k[1], method=k[2],
                 mean_scaled=total / count, count=count)
        for k, (total, count) in sums.items()
    ]
    return SuiteReport(rows=rows, failures=failures)


@dataclass
class FilterPolicy:
    """Keep/drop rules applied after labelling and critiques.

    The default drops only records labelled unanswerable; score thresholds
    are opt-in extensions.
    """

    min_scaled: dict[Criterion, float] = field(default_factory=dict)
    drop_unanswerable: bool = True

    def validate(self) -> "FilterPolicy":
        for criterion, threshold in self.min_scaled.items():
            if not 0.0 <= threshold <= 5.0:
                raise ValueError(f"threshold for {criterion.value} outside [0, 5]")
        return self


@dataclass
class DroppedRecord:
    record: QARecord
    reasons: list[str]


def filter_records(
    records: Sequence[QARecord], policy: FilterPolicy
) -> tuple[list[QARecord], list[DroppedRecord]]:
    """Partition records into kept and dropped; every drop carries reasons."""
    policy.validate()
    kept: list[QARecord] = []
    dropped: list[DroppedRecord] = []
    for rec in records:
        reasons: list[str] = []
        if policy.drop_unanswerable and rec.predicted_label == LabelClass.UNANSWERABLE:
            reasons.append("unanswerable")
        for criterion, threshold in sorted(policy.min_scaled.items(), key=lambda kv: kv[0].value):
            result = rec.critiques.get(criterion.value)
            if result is None:
                reasons.append(f"missing critique {criterion.value}")
            elif result.scaled < threshold:
                reasons.append(
                    f"{criterion.value} scaled {result.scaled} below {threshold}"
                )
        if reasons:
            dropped.append(DroppedRecord(record=rec, reasons=reasons))
        else:
            kept.append(rec)
    return kept, dropped
