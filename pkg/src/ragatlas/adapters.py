"""Adapters that turn public Q&A dataset rows into the canonical corpus.

Adapters consume already-downloaded rows (lists of dicts, typically parsed
from JSONL); fetching from hosting services is out of scope. Every adapter
applies the same post-processing: contexts longer than ``MAX_CONTEXT_CHARS``
Unicode characters are dropped (not truncated) together with their Q&As, and
the drop is counted.

Expected row shapes, by dataset name:

``squad2``
    Entries of the official JSON's ``data`` list:
    ``{"title", "paragraphs": [{"context", "qas": [{"id", "question",
    "answers": [{"text", ...}], "is_impossible"}]}]}``. Each paragraph
    becomes its own context.

``newsqa``
    ``{"storyId", "text", "questions": [{"q", "consensus": {"s", "e"}}]}``.
    The whole news story is the context; the answer is the consensus span
    ``text[s:e]`` (empty for bad/no-answer consensus).

``pubmedqa``
    Unlabelled-subset rows ``{"pubid", "question", "context":
    {"contexts": [...]}, "long_answer"}``. The abstract sections are joined
    with a single space; the long answer is the answer.

``hotpotqa``
    Sentence-similarity training triplets ``{"id", "question", "answer",
    "positive_context", "negative_context"}``. Only the positive context is
    kept; the negative one is discarded.

``msmarco``
    v2.1 rows ``{"query_id", "query", "passages": {"passage_text": [...]},
    "answers": [...]}``. The 10 passages are concatenated in passage order
    (single-space joiner) into one context per question.

``naturalq``
    Simplified-train rows ``{"question", "long_answers": [...]}`` with an
    optional short ``"answer"``. All long answers for a question are
    concatenated (single-space joiner) into the context.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence, TypeVar

from .records import MAX_CONTEXT_CHARS, ContextRecord, CorpusError, QARecord

PUBLIC_DATASETS = ("squad2", "newsqa", "pubmedqa", "hotpotqa", "msmarco", "naturalq")

# single-space joiner for msmarco passages / naturalq long answers; the
# sources do not specify one, so the most neutral choice is used
PASSAGE_JOINER = " "


@dataclass
class AdaptReport:
    """What an adapter kept and what it threw away."""

    dataset: str
    contexts_kept: int = 0
    contexts_dropped_too_long: int = 0
    qas_kept: int = 0
    qas_dropped_with_context: int = 0
    notes: list[str] = field(default_factory=list)


def _require(row: Mapping, key: str, dataset: str, idx: int):
    if key not in row:
        raise CorpusError(f"{dataset} row {idx}: missing required field {key!r}")
    return row[key]


def adapt_public_dataset(
    name: str, raw_rows: Sequence[Mapping]
) -> tuple[list[ContextRecord], list[QARecord], AdaptReport]:
    """Convert dataset-specific rows into (contexts, qas) plus a drop report."""
    if name not in PUBLIC_DATASETS:
        raise CorpusError(f"unknown dataset {name!r}; expected one of {PUBLIC_DATASETS}")
    report = AdaptReport(dataset=name)
    contexts: list[ContextRecord] = []
    qas: list[QARecord] = []

    def add(ctx_id: str, text: str, pairs: list[tuple[str, str, str]]) -> None:
        # pairs: (qa_id, question, answer) bound to this context
        if len(text) > MAX_CONTEXT_CHARS:
            report.contexts_dropped_too_long += 1
            report.qas_dropped_with_context += len(pairs)
            return
        contexts.append(ContextRecord(id=ctx_id, text=text, source=name).validate())
        report.contexts_kept += 1
        for qa_id, question, answer in pairs:
            if not question:
                continue
            qas.append(
                QARecord(
                    id=qa_id, context_id=ctx_id, question=question,
                    answer=answer, method="human",
                ).validate()
            )
            report.qas_kept += 1

    if name == "squad2":
        for i, row in enumerate(raw_rows):
            paragraphs = _require(row, "paragraphs", name, i)
            title = row.get("title", "")
            for j, para in enumerate(paragraphs):
                text = _require(para, "context", name, i)
                ctx_id = f"squad2-{i}-{j}"
                pairs = []
                for qa in para.get("qas", []):
                    answers = qa.get("answers") or []
                    answer = answers[0]["text"] if answers else ""
                    pairs.append((str(qa.get("id", f"{ctx_id}-q{len(pairs)}")),
                                  qa.get("question", ""), answer))
                add(ctx_id, text, pairs)
                if title and contexts and contexts[-1].id == ctx_id:
                    contexts[-1].meta["title"] = title

    elif name == "newsqa":
        for i, row in enumerate(raw_rows):
            text = _require(row, "text", name, i)
            story_id = str(row.get("storyId", f"newsqa-{i}"))
            pairs = []
            for k, q in enumerate(row.get("questions", [])):
                consensus = q.get("consensus") or {}
                if "s" in consensus and "e" in consensus:
                    answer = text[consensus["s"]:consensus["e"]]
                else:
                    answer = ""
                pairs.append((f"{story_id}-q{k}", q.get("q", ""), answer))
            add(story_id, text, pairs)

    elif name == "pubmedqa":
        for i, row in enumerate(raw_rows):
            sections = (_require(row, "context", name, i) or {}).get("contexts", [])
            text = PASSAGE_JOINER.join(sections)
            pubid = str(row.get("pubid", f"pubmedqa-{i}"))
            add(f"pubmedqa-{pubid}",
                text,
                [(f"pubmedqa-{pubid}-q0", row.get("question", ""),
                  row.get("long_answer", ""))])

    elif name == "hotpotqa":
        for i, row in enumerate(raw_rows):
            text = _require(row, "positive_context", name, i)
            rid = str(row.get("id", i))
            add(f"hotpotqa-{rid}",
                text,
                [(f"hotpotqa-{rid}-q0", _require(row, "question", name, i),
                  row.get("answer", ""))])

    elif name == "msmarco":
        for i, row in enumerate(raw_rows):
            passages = _require(row, "passages", name, i)
            texts = passages.get("passage_text") or []
            if not texts:
                raise CorpusError(f"msmarco row {i}: empty passage_text")
            text = PASSAGE_JOINER.join(texts)
            rid = str(row.get("query_id", i))
            answers = row.get("answers") or []
            add(f"msmarco-{rid}",
                text,
                [(f"msmarco-{rid}-q0", _require(row, "query", name, i),
                  answers[0] if answers else "")])

    elif name == "naturalq":
        for i, row in enumerate(raw_rows):
            longs = _require(row, "long_answers", name, i)
            if not longs:
                raise CorpusError(f"naturalq row {i}: empty long_answers")
            text = PASSAGE_JOINER.join(longs)
            add(f"naturalq-{i}",
                text,
                [(f"naturalq-{i}-q0", _require(row, "question", name, i),
                  row.get("answer", ""))])

    return contexts, qas, report


T = TypeVar("T")


def sample_subset(records: Sequence[T], n: int, seed: int) -> list[T]:
    """Draw n records without replacement, reproducibly for a given seed."""
    if n > len(records):
        raise CorpusError(f"cannot sample {n} of {len(records)} records")
    rng = random.Random(seed)
    return rng.sample(list(records), n)
