"""Uniform client for chat, embedding, and rerank endpoints.

Two backends share one interface: ``HttpBackend`` speaks the ubiquitous
OpenAI-style JSON contract (``/chat/completions``, ``/embeddings``, plus a
``/rerank`` endpoint in the Cohere/TEI style), and ``ScriptedBackend`` is a
deterministic in-process double used by tests, demos, and dry runs.

The gateway layers policy on top of whichever backend it wraps: bounded
concurrency, retry with exponential backoff and jitter on transient
failures, and an on-disk embedding cache with one file per
(model, text-hash) written atomically.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import re
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np


class GatewayError(RuntimeError):
    """Terminal gateway failure (retries exhausted, bad payload, auth)."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class TransientBackendError(RuntimeError):
    """Retryable failure: rate limit, 5xx, timeout, dropped connection."""


@dataclass
class GatewayConfig:
    """Connection and policy settings for one model endpoint."""

    base_url: str = ""
    model_id: str = "scripted"
    api_key_env: str = "RAGATLAS_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 1024
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass
class Completion:
    text: str
    prompt_fingerprint: str
    usage: dict[str, int] = field(default_factory=dict)


@dataclass
class EmbeddingVector:
    values: np.ndarray
    dim: int
    model_id: str


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _text_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Backend(Protocol):
    def chat(self, prompt: str, config: GatewayConfig) -> tuple[str, dict[str, int]]: ...

    def embed(self, texts: Sequence[str], config: GatewayConfig) -> list[list[float]]: ...

    def rerank(self, query: str, passages: Sequence[str], config: GatewayConfig) -> list[float]: ...


# ---------------------------------------------------------------------------
# HTTP backend (OpenAI-compatible)


class HttpBackend:
    """JSON-over-HTTP backend; API key read from the configured env var."""

    def __init__(self) -> None:
        import requests

        self._session = requests.Session()
        self._requests = requests

    def _headers(self, config: GatewayConfig) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, url: str, payload: dict, config: GatewayConfig) -> dict:
        try:
            resp = self._session.post(
                url, json=payload, headers=self._headers(config), timeout=config.timeout
            )
        except self._requests.Timeout as exc:
            raise TransientBackendError(f"timeout calling {url}: {exc}") from exc
        except self._requests.ConnectionError as exc:
            raise TransientBackendError(f"connection error calling {url}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"{url} returned {resp.status_code}")
        if resp.status_code in (401, 403):
            raise GatewayError(f"authentication failed against {url} ({resp.status_code})")
        if resp.status_code != 200:
            raise GatewayError(f"{url} returned {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def chat(self, prompt: str, config: GatewayConfig) -> tuple[str, dict[str, int]]:
        body = self._post(
            config.base_url.rstrip("/") + "/chat/completions",
            {
                "model": config.model_id,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": config.temperature,
                "max_tokens": config.max_tokens,
            },
            config,
        )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise GatewayError(f"malformed chat response: {str(body)[:200]}") from None
        usage = body.get("usage") or {}
        return text or "", {
            "prompt_tokens": int(usage.get("prompt_tokens", 0)),
            "completion_tokens": int(usage.get("completion_tokens", 0)),
        }

    def embed(self, texts: Sequence[str], config: GatewayConfig) -> list[list[float]]:
        body = self._post(
            config.base_url.rstrip("/") + "/embeddings",
            {"model": config.model_id, "input": list(texts)},
            config,
        )
        try:
            data = sorted(body["data"], key=lambda d: d.get("index", 0))
            return [list(map(float, d["embedding"])) for d in data]
        except (KeyError, TypeError):
            raise GatewayError(f"malformed embeddings response: {str(body)[:200]}") from None

    def rerank(self, query: str, passages: Sequence[str], config: GatewayConfig) -> list[float]:
        body = self._post(
            config.base_url.rstrip("/") + "/rerank",
            {"model": config.model_id, "query": query, "documents": list(passages)},
            config,
        )
        try:
            results = body["results"]
            scores = [0.0] * len(passages)
            for item in results:
                scores[int(item["index"])] = float(item["relevance_score"])
            return scores
        except (KeyError, TypeError, IndexError):
            raise GatewayError(f"malformed rerank response: {str(body)[:200]}") from None


# ---------------------------------------------------------------------------
# scripted backend


def _stable_rng(*parts: str) -> random.Random:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def hash_embedding(text: str, model_id: str, dim: int) -> list[float]:
    """Deterministic pseudo-embedding: a unit vector seeded by the text."""
    rng = _stable_rng("embed", model_id, str(dim), text)
    vec = np.array([rng.gauss(0.0, 1.0) for _ in range(dim)])
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return (vec / norm).tolist()


class ScriptedBackend:
    """Deterministic offline backend.

    Chat replies come from explicitly scripted fixtures keyed by the prompt
    fingerprint, falling back to ``responder`` when provided. Embeddings are
    hash-seeded unit vectors, so identical text always embeds identically.
    The backend counts concurrent calls so tests can observe the gateway's
    in-flight cap, and can inject transient failures for retry tests.
    """

    def __init__(
        self,
        responder: Callable[[str], str] | None = None,
        embed_dim: int = 32,
        rerank_responder: Callable[[str, Sequence[str]], list[float]] | None = None,
        latency: float = 0.0,
    ) -> None:
        self.responder = responder
        self.embed_dim = embed_dim
        self.rerank_responder = rerank_responder
        self.latency = latency
        self._scripts: dict[str, list[str]] = {}
        self._fail_queue: list[Exception] = []
        self._lock = threading.Lock()
        self._in_flight = 0
        self.max_observed_in_flight = 0
        self.chat_calls = 0
        self.embed_calls = 0

    def script_chat(self, prompt: str, *replies: str) -> None:
        """Queue replies for a prompt; consumed in order, last one sticks."""
        self._scripts.setdefault(prompt_fingerprint(prompt), []).extend(replies)

    def fail_next(self, count: int = 1, error: Exception | None = None) -> None:
        for _ in range(count):
            self._fail_queue.append(error or TransientBackendError("injected failure"))

    def _enter(self) -> None:
        with self._lock:
            self._in_flight += 1
            self.max_observed_in_flight = max(self.max_observed_in_flight, self._in_flight)
        if self.latency:
            time.sleep(self.latency)

    def _exit(self) -> None:
        with self._lock:
            self._in_flight -= 1

    def _maybe_fail(self) -> None:
        with self._lock:
            if self._fail_queue:
                raise self._fail_queue.pop(0)

    def chat(self, prompt: str, config: GatewayConfig) -> tuple[str, dict[str, int]]:
        self._enter()
        try:
            self._maybe_fail()
            with self._lock:
                self.chat_calls += 1
            fp = prompt_fingerprint(prompt)
            queue = self._scripts.get(fp)
            if queue:
                text = queue.pop(0) if len(queue) > 1 else queue[0]
            elif self.responder is not None:
                text = self.responder(prompt)
            else:
                raise GatewayError(f"no scripted reply for prompt fingerprint {fp[:12]}")
            usage = {
                "prompt_tokens": len(prompt.split()),
                "completion_tokens": len(text.split()),
            }
            return text, usage
        finally:
            self._exit()

    def embed(self, texts: Sequence[str], config: GatewayConfig) -> list[list[float]]:
        self._enter()
        try:
            self._maybe_fail()
            with self._lock:
                self.embed_calls += 1
            return [hash_embedding(t, config.model_id, self.embed_dim) for t in texts]
        finally:
            self._exit()

    def rerank(self, query: str, passages: Sequence[str], config: GatewayConfig) -> list[float]:
        self._enter()
        try:
            self._maybe_fail()
            if self.rerank_responder is not None:
                scores = list(self.rerank_responder(query, passages))
            else:
                # stable pseudo-relevance from query/passage token overlap
                q_terms = set(query.lower().split())
                scores = [
                    len(q_terms & set(p.lower().split())) / (len(q_terms) or 1)
                    for p in passages
                ]
            if len(scores) != len(passages):
                raise GatewayError(
                    f"rerank responder returned {len(scores)} scores for {len(passages)} passages"
                )
            return scores
        finally:
            self._exit()


# ---------------------------------------------------------------------------
# structured payload extraction


_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\n?|```")


def extract_structured_payload(text: str) -> dict:
    """Pull the first balanced ``{...}`` object out of a model reply.

    Tolerates code fences and surrounding prose (``Answer::: {...}``).
    Tries JSON first, then a Python-literal fallback for single-quoted
    replies.
    """
    cleaned = _FENCE_RE.sub("", text or "")
    n = len(cleaned)
    start = cleaned.find("{")
    while start != -1:
        depth = 0
        in_string: str | None = None
        escaped = False
        for i in range(start, n):
            ch = cleaned[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == in_string:
                    in_string = None
                continue
            if ch in "\"'":
                in_string = ch
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = cleaned[start : i + 1]
                    parsed = _try_parse(candidate)
                    if parsed is not None:
                        return parsed
                    break
        start = cleaned.find("{", start + 1)
    raise GatewayError(f"no parseable object found in reply: {text[:120]!r}")


def _try_parse(candidate: str) -> dict | None:
    try:
        obj = json.loads(candidate)
        return obj if isinstance(obj, dict) else None
    except json.JSONDecodeError:
        pass
    try:
        import ast

        obj = ast.literal_eval(candidate)
        return obj if isinstance(obj, dict) else None
    except (ValueError, SyntaxError):
        return None


# ---------------------------------------------------------------------------
# the gateway


class LlmGateway:
    """Backend wrapper adding retries, concurrency bounds, and embed cache."""

    def __init__(
        self,
        backend: Backend,
        config: GatewayConfig | None = None,
        embed_cache_dir: str | Path | None = None,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
    ) -> None:
        self.backend = backend
        self.config = config or GatewayConfig()
        self.embed_cache_dir = Path(embed_cache_dir) if embed_cache_dir else None
        self._backoff_base = backoff_base
        self._backoff_cap = backoff_cap
        self._sem = threading.BoundedSemaphore(self.config.max_in_flight)
        self._usage_lock = threading.Lock()
        self.total_usage: dict[str, int] = {"prompt_tokens": 0, "completion_tokens": 0}

    # -- retry plumbing ------------------------------------------------

    def _with_retries(self, fn: Callable[[], object], what: str):
        attempts = 0
        while True:
            attempts += 1
            try:
                with self._sem:
                    return fn()
            except TransientBackendError as exc:
                if attempts > self.config.max_retries:
                    raise GatewayError(
                        f"{what} failed after {attempts} attempts: {exc}", attempts=attempts
                    ) from exc
                delay = min(self._backoff_cap, self._backoff_base * (2 ** (attempts - 1)))
                time.sleep(delay * random.uniform(0.5, 1.0))

    # -- chat ------------------------------------------------------------

    def chat(self, prompt: str, config: GatewayConfig | None = None) -> Completion:
        if not prompt:
            raise GatewayError("prompt must be non-empty")
        cfg = config or self.config
        text, usage = self._with_retries(lambda: self.backend.chat(prompt, cfg), "chat")
        if not text:
            raise GatewayError("model returned an empty completion")
        with self._usage_lock:
            for k, v in usage.items():
                self.total_usage[k] = self.total_usage.get(k, 0) + v
        return Completion(text=text, prompt_fingerprint=prompt_fingerprint(prompt), usage=usage)

    def map_chat(self, prompts: Sequence[str]) -> list[Completion]:
        """Run many chats concurrently; order of results matches inputs."""
        if not prompts:
            return []
        with ThreadPoolExecutor(max_workers=self.config.max_in_flight) as pool:
            return list(pool.map(self.chat, prompts))

    # -- embeddings ------------------------------------------------------

    def _cache_path(self, model_id: str, text: str) -> Path | None:
        if self.embed_cache_dir is None:
            return None
        safe_model = re.sub(r"[^A-Za-z0-9._-]", "_", model_id)
        return self.embed_cache_dir / safe_model / f"{_text_hash(text)}.npy"

    def embed(self, texts: Sequence[str], config: GatewayConfig | None = None) -> list[EmbeddingVector]:
        if not texts:
            raise GatewayError("embed requires at least one text")
        cfg = config or self.config
        vectors: list[np.ndarray | None] = [None] * len(texts)
        missing: list[int] = []
        for i, text in enumerate(texts):
            path = self._cache_path(cfg.model_id, text)
            if path is not None and path.exists():
                vectors[i] = np.load(path)
            else:
                missing.append(i)

        if missing:
            fetched = self._with_retries(
                lambda: self.backend.embed([texts[i] for i in missing], cfg), "embed"
            )
            if len(fetched) != len(missing):
                raise GatewayError(
                    f"embedding endpoint returned {len(fetched)} vectors for {len(missing)} texts"
                )
            for slot, vals in zip(missing, fetched):
                arr = np.asarray(vals, dtype=np.float64)
                vectors[slot] = arr
                path = self._cache_path(cfg.model_id, texts[slot])
                if path is not None:
                    _atomic_save(path, arr)

        dims = {v.shape[0] for v in vectors if v is not None}
        if len(dims) != 1:
            bad = next(
                i for i, v in enumerate(vectors)
                if v is not None and v.shape[0] != vectors[0].shape[0]
            )
            raise GatewayError(f"embedding dim mismatch at index {bad}: got dims {sorted(dims)}")
        dim = dims.pop()
        return [EmbeddingVector(values=v, dim=dim, model_id=cfg.model_id) for v in vectors]

    # -- rerank ----------------------------------------------------------

    def rerank_score(
        self, query: str, passages: Sequence[str], config: GatewayConfig | None = None
    ) -> list[float]:
        if not passages:
            raise GatewayError("rerank requires at least one passage")
        cfg = config or self.config
        scores = self._with_retries(
            lambda: self.backend.rerank(query, list(passages), cfg), "rerank"
        )
        if len(scores) != len(passages):
            raise GatewayError(
                f"rerank returned {len(scores)} scores for {len(passages)} passages"
            )
        return [float(s) for s in scores]


# ---------------------------------------------------------------------------
# rule-based stub replies


def _slot(prompt: str, marker: str) -> str:
    """Text inside the [[...]] block following ``marker``, or ''."""
    start = prompt.find(marker)
    if start == -1:
        return ""
    start = prompt.find("[[", start)
    if start == -1:
        return ""
    end = prompt.find("]]", start)
    if end == -1:
        return ""
    return prompt[start + 2 : end].strip()


def _sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p.strip() for p in parts if p.strip()]


def stub_responder(prompt: str) -> str:
    """Deterministic rule-based replies for every pipeline prompt shape.

    Lets tests, demos, and dry runs drive the full pipeline offline: the
    reply for a given prompt is a pure function of the prompt text.
    """
    rng = _stable_rng("stub", prompt)

    if "Select the most suitable label from the list below" in prompt:
        label = rng.choice(["fact_single", "fact_single", "summary", "reasoning",
                            "unanswerable"])
        return json.dumps({"label_name": label, "reason": "stub judgement"})

    if "extract the main theme behind the following passage" in prompt:
        context = _slot(prompt, "passage:")
        words = context.split()[:6] or ["general", "subject"]
        return " ".join(words).rstrip(".,;") + " overview"

    if "Extract at most five factual statements" in prompt:
        context = _slot(prompt, "Passage:")
        sentences = _sentences(context)[:5]
        if len(sentences) < 2:
            sentences.append(f"The passage centres on item {rng.randrange(100)}.")
        return "\n".join(f"> {s}" for s in sentences)

    if "Merge the following sentences into three summary statements" in prompt:
        theme = _slot(prompt, "Theme:") or "the passage"
        return "\n".join(
            f"> Summary point {i + 1} about {theme}." for i in range(3)
        )

    if "Generate three reasoning conclusions" in prompt:
        theme = _slot(prompt, "Theme:") or "the passage"
        return "\n".join(
            f"> Conclusion {i + 1} inferred from {theme}." for i in range(3)
        )

    if "Generate one question which is answered only by the statement above" in prompt:
        statement = _slot(prompt, "the following statement:")
        topic = " ".join(statement.split()[:5]).rstrip(".,;") or "this topic"
        return f"> What does the source say about {topic.lower()}?"

    if "write a factoid question and an answer given a context" in prompt:
        context = _slot(prompt, "Context:")
        sentences = _sentences(context)
        answer = sentences[0] if sentences else "An unspecified detail."
        subject = " ".join(answer.split()[:4]).rstrip(".,;") or "the subject"
        return json.dumps(
            {"question": f"What is stated about {subject.lower()}?", "answer": answer}
        )

    if "'total rating'" in prompt or "tautological exchange" in prompt:
        rating = rng.choice([3, 4, 4, 5, 5])
        return json.dumps({"evaluation": "stub critique", "rating": str(rating)})

    return f"stub reply {prompt_fingerprint(prompt)[:12]}"


def _atomic_save(path: Path, arr: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.save(fh, arr)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
