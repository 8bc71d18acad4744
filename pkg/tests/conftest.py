"""Shared fixtures: scripted gateways and tiny corpora."""

from __future__ import annotations

import random

import pytest

from ragatlas import ContextRecord, GatewayConfig, LlmGateway, QARecord, ScriptedBackend
from ragatlas.gateway import stub_responder


@pytest.fixture
def backend() -> ScriptedBackend:
    return ScriptedBackend()


@pytest.fixture
def gateway(backend: ScriptedBackend) -> LlmGateway:
    return LlmGateway(backend, GatewayConfig(model_id="test-model"))


@pytest.fixture
def stub_gateway() -> LlmGateway:
    """Gateway whose backend answers every prompt deterministically."""
    return LlmGateway(
        ScriptedBackend(responder=stub_responder, embed_dim=16),
        GatewayConfig(model_id="stub-model"),
    )


def make_contexts(n: int, seed: int = 0, source: str = "fixture") -> list[ContextRecord]:
    """Small corpus with overlapping vocabulary so BM25 has work to do."""
    rng = random.Random(seed)
    vocab = [
        "sensor", "voltage", "supply", "current", "population", "paris",
        "capital", "france", "report", "energy", "usage", "increase",
        "coffee", "machine", "patent", "tomato", "fruit", "study",
        "abstract", "finding", "conclusion", "retrieval", "index", "query",
    ]
    contexts = []
    for i in range(n):
        words = rng.choices(vocab, k=rng.randint(8, 30))
        sentences = []
        for s in range(0, len(words), 8):
            chunk = words[s:s + 8]
            if chunk:
                sentences.append(" ".join(chunk).capitalize() + ".")
        contexts.append(
            ContextRecord(id=f"c{i:03d}", text=" ".join(sentences), source=source)
        )
    return contexts


def make_qas(contexts: list[ContextRecord], seed: int = 0) -> list[QARecord]:
    rng = random.Random(seed)
    qas = []
    for i, ctx in enumerate(contexts):
        words = ctx.text.lower().replace(".", "").split()
        sample = rng.sample(words, k=min(4, len(words)))
        qas.append(
            QARecord(
                id=f"q{i:03d}",
                context_id=ctx.id,
                question="what about " + " ".join(sample) + "?",
                answer=words[0],
            )
        )
    return qas
