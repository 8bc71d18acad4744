"""Prompt template loading and rendering.

Templates ship as plain text files under ``ragatlas/prompts``. Rendering is
a single left-to-right pass that fills the named ``{placeholder}`` slots and
collapses ``{{``/``}}`` escapes to literal braces (several templates embed a
brace-delimited example payload). Substituted values are never re-scanned,
and other braced text, e.g. the label descriptor lines in the labelling
template, passes through untouched.
"""

from __future__ import annotations

import re
from pathlib import Path

_PROMPT_ROOT = Path(__file__).parent / "prompts"

PLACEHOLDERS = ("context", "question", "answer", "theme", "statement", "statements")

TEMPLATE_FILES = {
    "label": "label.txt",
    "simple_qa": "simple_qa.txt",
    "theme": "theme.txt",
    "factual_statements": "factual_statements.txt",
    "summary_statements": "summary_statements.txt",
    "reasoning_statements": "reasoning_statements.txt",
    "question": "question.txt",
}

CRITIQUE_TEMPLATE_DIR = "critique"

_TOKEN_RE = re.compile(r"\{\{|\}\}|\{(" + "|".join(PLACEHOLDERS) + r")\}")


class PromptError(ValueError):
    """Unknown template or unfilled placeholder."""


def template_path(name: str) -> Path:
    if name in TEMPLATE_FILES:
        return _PROMPT_ROOT / TEMPLATE_FILES[name]
    candidate = _PROMPT_ROOT / CRITIQUE_TEMPLATE_DIR / f"{name}.txt"
    if candidate.exists():
        return candidate
    raise PromptError(f"unknown prompt template {name!r}")


def load_template(name: str) -> str:
    return template_path(name).read_text(encoding="utf-8")


def render(template: str, **values: str) -> str:
    unknown = set(values) - set(PLACEHOLDERS)
    if unknown:
        raise PromptError(f"unknown placeholders {sorted(unknown)!r}")

    def _sub(match: re.Match) -> str:
        token = match.group(0)
        if token == "{{":
            return "{"
        if token == "}}":
            return "}"
        key = match.group(1)
        if key not in values:
            raise PromptError(f"template slot {{{key}}} was not filled")
        return values[key]

    return _TOKEN_RE.sub(_sub, template)


def render_named(name: str, **values: str) -> str:
    return render(load_template(name), **values)
