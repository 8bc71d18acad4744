"""Synthetic Q&A generation.

Two strategies are implemented. The simple-prompt baseline asks for one
factoid question/answer pair per context in a single call. The
statement-extraction pipeline inverts generation to keep answers grounded:
summarize the context into a theme, extract up to five factual statements,
optionally merge them into summary statements or derive reasoning
conclusions, pick one statement of the kind matching the requested label,
and finally write a question that only that statement answers. The chosen
statement becomes the answer verbatim.

Also here: the fine-tune dataset exporter, which renders records into
flagged input/output lines ("<<label>> context" in, "<<label>> question
<a> answer" out) with a hold-one-dataset-out split.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .gateway import GatewayError, LlmGateway, extract_structured_payload
from .prompts_io import load_template, render
from .records import ContextRecord, CorpusError, LabelClass, QARecord

log = logging.getLogger(__name__)

QUESTION_TYPE_FLAGS = {
    LabelClass.FACT_SINGLE: "<<fact_single>>",
    LabelClass.SUMMARY: "<<summary>>",
    LabelClass.REASONING: "<<reasoning>>",
}

ANSWER_SEPARATOR = "<a>"

LABEL_TO_KIND = {
    LabelClass.FACT_SINGLE: "factual",
    LabelClass.SUMMARY: "summary",
    LabelClass.REASONING: "conclusion",
}
KIND_TO_LABEL = {v: k for k, v in LABEL_TO_KIND.items()}

MAX_FACTUAL_STATEMENTS = 5
TARGET_DERIVED_STATEMENTS = 3


class GenerationError(RuntimeError):
    """A generation stage failed; the message names the stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class Theme:
    text: str

    def validate(self) -> "Theme":
        if not self.text.strip():
            raise GenerationError("theme", "theme must be non-empty")
        return self


@dataclass
class StatementSet:
    """Per-context statements the generator draws answers from."""

    context_id: str
    theme: Theme
    factual: list[str] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)
    conclusion: list[str] = field(default_factory=list)
    degraded: dict[str, int] = field(default_factory=dict)

    def of_kind(self, kind: str) -> list[str]:
        return {"factual": self.factual, "summary": self.summary,
                "conclusion": self.conclusion}[kind]


def parse_bullets(text: str) -> list[str]:
    """Payloads of lines starting with '>'; surrounding prose is ignored."""
    bullets = []
    for line in (text or "").splitlines():
        stripped = line.strip()
        if stripped.startswith(">"):
            payload = stripped[1:].strip()
            if payload:
                bullets.append(payload)
    if not bullets:
        raise GenerationError("parse_bullets", f"no bullet lines in reply: {text[:120]!r}")
    return bullets


def _chat_bullets(gateway: LlmGateway, prompt: str, stage: str) -> list[str]:
    reply = gateway.chat(prompt).text
    return parse_bullets_or_raise(reply, stage)


def parse_bullets_or_raise(reply: str, stage: str) -> list[str]:
    try:
        return parse_bullets(reply)
    except GenerationError as exc:
        raise GenerationError(stage, str(exc)) from None


def summarize_theme(context: str, gateway: LlmGateway) -> Theme:
    if not context:
        raise GenerationError("theme", "context must be non-empty")
    prompt = render(load_template("theme"), context=context)
    reply = gateway.chat(prompt).text.strip()
    if not reply:
        raise GenerationError("theme", "model returned an empty theme")
    return Theme(text=reply).validate()


def extract_factual_statements(
    context: str, theme: Theme, gateway: LlmGateway
) -> tuple[list[str], bool]:
    """Up to five factual statements; returns (statements, truncated)."""
    prompt = render(load_template("factual_statements"), theme=theme.text, context=context)
    bullets: list[str] | None = None
    for _ in range(2):
        try:
            bullets = _chat_bullets(gateway, prompt, "factual_statements")
            break
        except GenerationError:
            bullets = None
    if bullets is None:
        raise GenerationError("factual_statements", "no bullets after re-ask")
    truncated = len(bullets) > MAX_FACTUAL_STATEMENTS
    if truncated:
        log.warning("factual extraction returned %d statements; keeping first %d",
                    len(bullets), MAX_FACTUAL_STATEMENTS)
    return bullets[:MAX_FACTUAL_STATEMENTS], truncated


def _derive_statements(
    template_name: str,
    stage: str,
    statements: Sequence[str],
    theme: Theme,
    gateway: LlmGateway,
) -> tuple[list[str], bool]:
    """Shared merge/conclude step: aim for 3, re-ask once, accept 1..3."""
    if len(statements) < 2:
        raise GenerationError(stage, "need at least 2 source statements")
    prompt = render(
        load_template(template_name),
        theme=theme.text,
        statements="\n".join(statements),
    )
    result: list[str] | None = None
    for _ in range(2):
        try:
            bullets = _chat_bullets(gateway, prompt, stage)
        except GenerationError:
            continue
        result = bullets
        if len(bullets) == TARGET_DERIVED_STATEMENTS:
            break
    if result is None:
        raise GenerationError(stage, "no bullets after re-ask")
    degraded = len(result) != TARGET_DERIVED_STATEMENTS
    return result[:TARGET_DERIVED_STATEMENTS], degraded


def merge_summary_statements(
    statements: Sequence[str], theme: Theme, gateway: LlmGateway
) -> tuple[list[str], bool]:
    return _derive_statements("summary_statements", "summary_statements",
                              statements, theme, gateway)


def derive_conclusions(
    statements: Sequence[str], theme: Theme, gateway: LlmGateway
) -> tuple[list[str], bool]:
    return _derive_statements("reasoning_statements", "reasoning_statements",
                              statements, theme, gateway)


def generate_question(
    statement: str, theme: Theme, gateway: LlmGateway, use_theme: bool = True
) -> str:
    """One question answered only by the statement; exactly one bullet."""
    if not statement:
        raise GenerationError("question", "statement must be non-empty")
    prompt = render(
        load_template("question"),
        theme=theme.text if use_theme else "",
        statement=statement,
    )
    last = "no reply"
    for _ in range(2):
        try:
            bullets = _chat_bullets(gateway, prompt, "question")
        except GenerationError as exc:
            last = str(exc)
            continue
        if len(bullets) == 1:
            return bullets[0]
        last = f"expected exactly one bullet, got {len(bullets)}"
    raise GenerationError("question", last)


def build_statement_set(
    context: ContextRecord,
    gateway: LlmGateway,
    kinds: Sequence[str] = ("factual",),
) -> StatementSet:
    """Run theme + factual extraction, deriving other kinds on request."""
    theme = summarize_theme(context.text, gateway)
    factual, truncated = extract_factual_statements(context.text, theme, gateway)
    sset = StatementSet(context_id=context.id, theme=theme, factual=factual)
    if truncated:
        sset.degraded["factual_truncated"] = 1
    if "summary" in kinds:
        sset.summary, degraded = merge_summary_statements(factual, theme, gateway)
        if degraded:
            sset.degraded["summary"] = len(sset.summary)
    if "conclusion" in kinds:
        sset.conclusion, degraded = derive_conclusions(factual, theme, gateway)
        if degraded:
            sset.degraded["conclusion"] = len(sset.conclusion)
    return sset


def _qa_id(context_id: str, label: LabelClass, seed: int, statement: str) -> str:
    digest = hashlib.sha256(
        f"{context_id}|{label.value}|{seed}|{statement}".encode("utf-8")
    ).hexdigest()
    return f"gen-{digest[:16]}"


def generate_labeled_qa(
    context: ContextRecord,
    requested_label: LabelClass,
    seed: int,
    gateway: LlmGateway,
    statement_set: StatementSet | None = None,
    use_theme: bool = True,
) -> QARecord:
    """Statement-extraction generation of one QA with the requested label.

    The answer is the chosen statement verbatim; the statement of the
    matching kind is drawn uniformly with the given seed. A prebuilt
    ``statement_set`` is reused (and extended if its kind is missing) so one
    context can serve several labels without repeating LLM calls.
    """
    if requested_label not in LABEL_TO_KIND:
        raise GenerationError("generate_labeled_qa",
                              f"cannot request label {requested_label.value!r}")
    kind = LABEL_TO_KIND[requested_label]
    if statement_set is None:
        statement_set = build_statement_set(context, gateway, kinds=(kind,))
    elif not statement_set.of_kind(kind):
        if kind == "summary":
            statement_set.summary, degraded = merge_summary_statements(
                statement_set.factual, statement_set.theme, gateway)
            if degraded:
                statement_set.degraded["summary"] = len(statement_set.summary)
        elif kind == "conclusion":
            statement_set.conclusion, degraded = derive_conclusions(
                statement_set.factual, statement_set.theme, gateway)
            if degraded:
                statement_set.degraded["conclusion"] = len(statement_set.conclusion)

    pool = statement_set.of_kind(kind)
    if not pool:
        raise GenerationError("generate_labeled_qa", f"no {kind} statements available")
    statement = random.Random(seed).choice(pool)
    question = generate_question(statement, statement_set.theme, gateway, use_theme=use_theme)
    record = QARecord(
        id=_qa_id(context.id, requested_label, seed, statement),
        context_id=context.id,
        question=question,
        answer=statement,
        requested_label=requested_label,
        method="statement_extraction",
        statement_kind=kind,
    )
    if statement_set.degraded:
        record.extra["degraded_statements"] = dict(statement_set.degraded)
    return record.validate()


def generate_simple_qa(context: ContextRecord, gateway: LlmGateway) -> QARecord:
    """Single-prompt factoid generation; reply must carry question+answer."""
    if not context.text:
        raise GenerationError("simple_qa", "context must be non-empty")
    prompt = render(load_template("simple_qa"), context=context.text)
    last = "no reply"
    for _ in range(2):
        reply = gateway.chat(prompt).text
        try:
            payload = extract_structured_payload(reply)
        except GatewayError as exc:
            last = str(exc)
            continue
        question = payload.get("question")
        answer = payload.get("answer")
        if isinstance(question, str) and question and isinstance(answer, str):
            return QARecord(
                id=_qa_id(context.id, LabelClass.FACT_SINGLE, 0, question),
                context_id=context.id,
                question=question,
                answer=answer,
                method="simple_prompt",
            ).validate()
        last = f"reply missing question/answer keys: {reply[:120]!r}"
    raise GenerationError("simple_qa", last)


# ---------------------------------------------------------------------------
# fine-tune export


def finetune_line(label: LabelClass, context_text: str, question: str, answer: str) -> dict:
    flag = QUESTION_TYPE_FLAGS[label]
    return {
        "input": f"{flag} {context_text}",
        "output": f"{flag} {question} {ANSWER_SEPARATOR} {answer}",
    }


def export_finetune_dataset(
    records: Sequence[QARecord],
    contexts: Mapping[str, ContextRecord],
    holdout_dataset: str,
    out_dir: str | Path,
    validation_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[Path, Path]:
    """Write train/validation JSONL files, excluding the holdout dataset.

    Records are shuffled with the seed before splitting; the validation
    file receives floor(fraction * n) records.
    """
    if not 0.0 <= validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in [0, 1)")
    rows = []
    for rec in records:
        if rec.requested_label is None:
            raise CorpusError(f"qa {rec.id!r}: missing requested_label")
        if rec.requested_label not in QUESTION_TYPE_FLAGS:
            raise CorpusError(
                f"qa {rec.id!r}: label {rec.requested_label.value!r} has no question-type flag"
            )
        ctx = contexts.get(rec.context_id)
        if ctx is None:
            raise CorpusError(f"qa {rec.id!r}: unresolved context_id {rec.context_id!r}")
        if ctx.source == holdout_dataset:
            continue
        rows.append(finetune_line(rec.requested_label, ctx.text, rec.question, rec.answer))
    if records and not rows:
        raise CorpusError(
            f"holdout {holdout_dataset!r} excluded every record; nothing to export"
        )

    rng = random.Random(seed)
    rng.shuffle(rows)
    n_val = math.floor(validation_fraction * len(rows))
    val_rows, train_rows = rows[:n_val], rows[n_val:]

    run_dir = Path(out_dir) / f"holdout_{holdout_dataset}"
    run_dir.mkdir(parents=True, exist_ok=True)
    train_path = run_dir / "train.jsonl"
    val_path = run_dir / "validation.jsonl"
    for path, split in ((train_path, train_rows), (val_path, val_rows)):
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for row in split:
                fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
                fh.write("\n")
    return train_path, val_path
