"""The training-file wire format shared with the ragatlas exporter.

One JSON object per line:

    {"input": "<<question_type>> context text",
     "output": "<<question_type>> question <a> answer"}

The question-type flag is one of <<fact_single>>, <<summary>>,
<<reasoning>>; the single token ``<a>`` separates question from answer.
This module never imports ragatlas — the line format IS the interface.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

ANSWER_SEPARATOR = "<a>"
QUESTION_TYPE_FLAGS = ("<<fact_single>>", "<<summary>>", "<<reasoning>>")

_FLAG_RE = re.compile(r"^(<<[a-z_]+>>)\s*(.*)$", re.S)


class DataFormatError(ValueError):
    """A training line violates the wire format; message names the line."""


@dataclass
class Example:
    input_text: str
    output_text: str

    @property
    def flag(self) -> str:
        match = _FLAG_RE.match(self.input_text)
        return match.group(1) if match else ""


def split_flag(text: str) -> tuple[str, str]:
    """(flag, remainder); flag is '' when the text carries none."""
    match = _FLAG_RE.match(text.strip())
    if not match:
        return "", text.strip()
    return match.group(1), match.group(2).strip()


def parse_output(output_text: str) -> tuple[str, str, str]:
    """Split an output line into (flag, question, answer).

    Raises DataFormatError when the answer separator is missing.
    """
    flag, rest = split_flag(output_text)
    if ANSWER_SEPARATOR not in rest:
        raise DataFormatError(f"output lacks the {ANSWER_SEPARATOR!r} separator")
    question, answer = rest.split(ANSWER_SEPARATOR, 1)
    return flag, question.strip(), answer.strip()


def read_examples(path: str | Path) -> list[Example]:
    """Load and validate a training/validation file."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    examples: list[Example] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(row, dict) or "input" not in row or "output" not in row:
                raise DataFormatError(f"{path}:{lineno}: line needs input and output keys")
            example = Example(input_text=str(row["input"]), output_text=str(row["output"]))
            if ANSWER_SEPARATOR not in example.output_text:
                raise DataFormatError(
                    f"{path}:{lineno}: output lacks the {ANSWER_SEPARATOR!r} separator"
                )
            if not example.flag:
                raise DataFormatError(
                    f"{path}:{lineno}: input lacks a <<question_type>> flag"
                )
            examples.append(example)
    if not examples:
        raise DataFormatError(f"{path}: no examples")
    return examples
