import json
import random
from pathlib import Path

import pytest

FLAGS = ("<<fact_single>>", "<<summary>>", "<<reasoning>>")

TOPICS = [
    "sensor voltage supply", "city population estimate", "energy usage report",
    "bluetooth pairing steps", "coffee machine patent", "retrieval index tuning",
]


def make_training_lines(n: int, seed: int = 0) -> list[dict]:
    """Paired input/output lines in the exporter's wire format."""
    rng = random.Random(seed)
    lines = []
    for i in range(n):
        topic = TOPICS[i % len(TOPICS)]
        flag = FLAGS[i % len(FLAGS)]
        context = f"document {i} about {topic} with value {rng.randint(1, 99)}"
        question = f"what does document {i} say about {topic} ?"
        answer = f"document {i} reports {topic}"
        lines.append({
            "input": f"{flag} {context}",
            "output": f"{flag} {question} <a> {answer}",
        })
    return lines


def write_jsonl(rows, path: Path) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    return path


@pytest.fixture
def train_file(tmp_path) -> Path:
    return write_jsonl(make_training_lines(50), tmp_path / "train.jsonl")


@pytest.fixture
def validation_file(tmp_path) -> Path:
    return write_jsonl(make_training_lines(10, seed=9), tmp_path / "validation.jsonl")
