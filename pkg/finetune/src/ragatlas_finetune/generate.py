"""Batch Q&A generation with a trained adapter.

Contexts come in as ragatlas context lines ({id, text, source, ...});
records go out as ragatlas Q&A lines with method ``finetuned_model``. An
output that lacks the ``<a>`` separator is kept but flagged
(``malformed_output: true``) so downstream critiques can quantify it.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .data import ANSWER_SEPARATOR, DataFormatError, QUESTION_TYPE_FLAGS, split_flag
from .training import TrainedAdapter

GENERATABLE_LABELS = ("fact_single", "summary", "reasoning")


def read_context_lines(path: str | Path) -> list[dict]:
    path = Path(path)
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if "id" not in row or "text" not in row:
                raise DataFormatError(f"{path}:{lineno}: context needs id and text")
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: no contexts")
    return rows


def parse_generation(decoded: str) -> tuple[str, str, bool]:
    """(question, answer, malformed) from raw model output text."""
    _, rest = split_flag(decoded)
    if ANSWER_SEPARATOR not in rest:
        return rest.strip() or "[empty generation]", "", True
    question, answer = rest.split(ANSWER_SEPARATOR, 1)
    question = question.strip() or "[empty generation]"
    return question, answer.strip(), False


def _record_id(context_id: str, label: str, text: str) -> str:
    digest = hashlib.sha256(f"{context_id}|{label}|{text}".encode("utf-8")).hexdigest()
    return f"ft-{digest[:16]}"


@torch.no_grad()
def generate_records(
    adapter: TrainedAdapter,
    contexts: Sequence[dict],
    requested_label: str,
    batch_size: int = 8,
    max_new_tokens: int = 64,
) -> list[dict]:
    if requested_label not in GENERATABLE_LABELS:
        raise ValueError(
            f"label {requested_label!r} is not generatable; pick one of {GENERATABLE_LABELS}"
        )
    flag = f"<<{requested_label}>>"
    assert flag in QUESTION_TYPE_FLAGS
    model, tokenizer = adapter.load_model()
    records: list[dict] = []
    for start in range(0, len(contexts), batch_size):
        batch = contexts[start : start + batch_size]
        inputs = tokenizer(
            [f"{flag} {row['text']}" for row in batch],
            return_tensors="pt", padding=True, truncation=True, max_length=512,
        )
        outputs = model.generate(
            input_ids=inputs["input_ids"],
            attention_mask=inputs["attention_mask"],
            max_new_tokens=max_new_tokens,
            do_sample=False,
        )
        for row, decoded in zip(batch, tokenizer.batch_decode(outputs,
                                                              skip_special_tokens=True)):
            question, answer, malformed = parse_generation(decoded)
            record = {
                "id": _record_id(row["id"], requested_label, decoded),
                "context_id": row["id"],
                "question": question,
                "answer": answer,
                "requested_label": requested_label,
                "predicted_label": None,
                "annotator_labels": [],
                "method": "finetuned_model",
                "critiques": {},
            }
            if malformed:
                record["malformed_output"] = True
            records.append(record)
    return records


def write_records(records: Iterable[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            fh.write("\n")
    return path
