"""In-process hybrid retrieval and the per-label benchmark.

Lexical scoring is Okapi BM25 over an inverted index:

    idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    score(d, q) = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl/avgdl))

with k1 = 1.2 and b = 0.75 by default. Dense scoring is cosine over
unit-normalized embeddings. Hybrid fusion gathers the union of the top
``candidate_k`` documents from each retriever, computes both raw scores
exactly for every candidate, min-max normalizes each score set over the
candidates (all-equal sets normalize to 1.0), and ranks by the convex
combination ``w * lexical + (1 - w) * dense``. Ties always break by
ascending document id, so rankings are total orders. At w=0 or w=1 the
hybrid ranking degenerates to the pure dense or pure lexical order.

The benchmark scans w over {0, 0.05, 0.1, 0.2, 0.5, 1}, measures Recall@5
against each question's ground context, and reports one row per label plus
an Inclusive row over all questions.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .gateway import LlmGateway
from .records import ContextRecord, LabelClass, QARecord

SCAN_WEIGHTS = (0.0, 0.05, 0.1, 0.2, 0.5, 1.0)

INDEX_FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class RetrievalError(RuntimeError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercased maximal runs of Unicode alphanumerics, in order."""
    return _TOKEN_RE.findall((text or "").lower())


# ---------------------------------------------------------------------------
# lexical index


@dataclass
class LexicalIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    avgdl: float
    doc_count: int
    k1: float = 1.2
    b: float = 0.75

    @property
    def doc_ids(self) -> list[str]:
        return sorted(self.doc_lengths)


def build_lexical_index(
    contexts: Sequence[ContextRecord], k1: float = 1.2, b: float = 0.75
) -> LexicalIndex:
    if not contexts:
        raise RetrievalError("cannot index an empty corpus")
    if k1 <= 0 or not 0.0 <= b <= 1.0:
        raise RetrievalError(f"bad BM25 parameters k1={k1}, b={b}")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for ctx in contexts:
        terms = tokenize(ctx.text)
        doc_lengths[ctx.id] = len(terms)
        freqs: dict[str, int] = {}
        for term in terms:
            freqs[term] = freqs.get(term, 0) + 1
        for term, tf in freqs.items():
            postings.setdefault(term, []).append((ctx.id, tf))
    for plist in postings.values():
        plist.sort()
    avgdl = sum(doc_lengths.values()) / len(doc_lengths)
    return LexicalIndex(
        postings=postings, doc_lengths=doc_lengths, avgdl=avgdl,
        doc_count=len(doc_lengths), k1=k1, b=b,
    )


def bm25_scores(index: LexicalIndex, query_terms: Sequence[str]) -> dict[str, float]:
    """BM25 score per document containing at least one query term."""
    scores: dict[str, float] = {}
    n = index.doc_count
    for term in query_terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        df = len(plist)
        idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        for doc_id, tf in plist:
            dl = index.doc_lengths[doc_id]
            denom = tf + index.k1 * (1.0 - index.b + index.b * dl / index.avgdl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (index.k1 + 1.0) / denom
    return scores


# ---------------------------------------------------------------------------
# dense index


@dataclass
class DenseIndex:
    ids: list[str]
    vectors: np.ndarray  # row-aligned with ids, unit-normalized
    dim: int
    model_id: str
    _row: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self._row:
            self._row = {doc_id: i for i, doc_id in enumerate(self.ids)}

    def vector(self, doc_id: str) -> np.ndarray:
        return self.vectors[self._row[doc_id]]


def unit_normalize(vec: np.ndarray) -> np.ndarray:
    arr = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        return arr
    return arr / norm


def build_dense_index(
    contexts: Sequence[ContextRecord], gateway: LlmGateway
) -> DenseIndex:
    if not contexts:
        raise RetrievalError("cannot index an empty corpus")
    embeddings = gateway.embed([c.text for c in contexts])
    vectors = np.stack([unit_normalize(e.values) for e in embeddings])
    return DenseIndex(
        ids=[c.id for c in contexts],
        vectors=vectors,
        dim=embeddings[0].dim,
        model_id=embeddings[0].model_id,
    )


def cosine_scores(index: DenseIndex, query_vec: np.ndarray) -> dict[str, float]:
    q = unit_normalize(query_vec)
    sims = index.vectors @ q
    return {doc_id: float(s) for doc_id, s in zip(index.ids, sims)}


# ---------------------------------------------------------------------------
# hybrid fusion


@dataclass
class HybridParams:
    text_weight: float = 0.1
    candidate_k: int = 50
    top_n: int = 5

    def validate(self) -> "HybridParams":
        if not 0.0 <= self.text_weight <= 1.0:
            raise RetrievalError("text_weight must lie in [0, 1]")
        if self.top_n > self.candidate_k:
            raise RetrievalError("top_n must not exceed candidate_k")
        if self.top_n < 1 or self.candidate_k < 1:
            raise RetrievalError("top_n and candidate_k must be positive")
        return self


def _top_ids(scores: Mapping[str, float], k: int) -> list[str]:
    return [doc for doc, _ in sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def _minmax(values: Mapping[str, float]) -> dict[str, float]:
    if not values:
        return {}
    lo = min(values.values())
    hi = max(values.values())
    if hi == lo:
        return {k: 1.0 for k in values}
    span = hi - lo
    return {k: (v - lo) / span for k, v in values.items()}


@dataclass
class QueryCandidates:
    """Raw and normalized scores over one query's candidate union.

    Building this once lets a weight scan re-fuse candidates cheaply: the
    candidate set and both score sets are weight-independent.
    """

    lexical_norm: dict[str, float]
    dense_norm: dict[str, float]

    def fuse(self, text_weight: float, top_n: int) -> list[tuple[str, float]]:
        fused = {
            doc: text_weight * self.lexical_norm[doc]
            + (1.0 - text_weight) * self.dense_norm[doc]
            for doc in self.lexical_norm
        }
        ranked = sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[:top_n]


def prepare_query(
    query: str,
    lexical: LexicalIndex,
    dense: DenseIndex,
    params: HybridParams,
    gateway: LlmGateway,
    query_vec: np.ndarray | None = None,
) -> QueryCandidates:
    """Embed, score, and normalize one query's candidate union."""
    params.validate()
    terms = tokenize(query)
    lex_raw_all = bm25_scores(lexical, terms)
    if query_vec is None:
        query_vec = np.asarray(gateway.embed([query])[0].values, dtype=np.float64)
    q = unit_normalize(query_vec)
    if not terms and not q.any():
        raise RetrievalError("query has no tokens and a zero embedding")
    dense_raw_all = cosine_scores(dense, q)

    candidates = set(_top_ids(lex_raw_all, params.candidate_k))
    candidates |= set(_top_ids(dense_raw_all, params.candidate_k))

    lex_raw = {doc: lex_raw_all.get(doc, 0.0) for doc in candidates}
    dense_raw = {doc: dense_raw_all[doc] for doc in candidates}
    return QueryCandidates(lexical_norm=_minmax(lex_raw), dense_norm=_minmax(dense_raw))


def hybrid_search(
    query: str,
    lexical: LexicalIndex,
    dense: DenseIndex,
    params: HybridParams,
    gateway: LlmGateway,
) -> list[tuple[str, float]]:
    """Top-n (doc id, fused score), descending, ties by ascending doc id."""
    prepared = prepare_query(query, lexical, dense, params, gateway)
    return prepared.fuse(params.text_weight, params.top_n)


def rerank_stage(
    query: str,
    ranked: Sequence[tuple[str, float]],
    passages: Mapping[str, str],
    gateway: LlmGateway,
) -> list[tuple[str, float]]:
    """Reorder candidates by rerank-endpoint scores; off by default."""
    if not ranked:
        raise RetrievalError("rerank needs a non-empty candidate list")
    doc_ids = [doc for doc, _ in ranked]
    scores = gateway.rerank_score(query, [passages[d] for d in doc_ids])
    rescored = sorted(zip(doc_ids, scores), key=lambda kv: (-kv[1], kv[0]))
    return [(doc, float(score)) for doc, score in rescored]


# ---------------------------------------------------------------------------
# metrics and scans


def recall_at_n(
    rankings: Mapping[str, Sequence[str]],
    ground: Mapping[str, str],
    n: int = 5,
) -> float:
    """Fraction of queries whose ground context id is in the top n."""
    if not rankings:
        raise RetrievalError("no rankings to score")
    hits = 0
    for query_id, ranked_ids in rankings.items():
        if query_id not in ground:
            raise RetrievalError(f"query {query_id!r} has no ground context id")
        if ground[query_id] in list(ranked_ids)[:n]:
            hits += 1
    return hits / len(rankings)


def scan_weights(
    queries: Mapping[str, str],
    ground: Mapping[str, str],
    lexical: LexicalIndex,
    dense: DenseIndex,
    gateway: LlmGateway,
    params: HybridParams | None = None,
    weights: Sequence[float] = SCAN_WEIGHTS,
) -> dict[float, float]:
    """Recall@top_n per text weight; one embedding pass per query."""
    params = (params or HybridParams()).validate()
    prepared = {
        qid: prepare_query(question, lexical, dense, params, gateway)
        for qid, question in queries.items()
    }
    out: dict[float, float] = {}
    for w in weights:
        rankings = {
            qid: [doc for doc, _ in qc.fuse(w, params.top_n)]
            for qid, qc in prepared.items()
        }
        out[w] = recall_at_n(rankings, ground, n=params.top_n)
    return out


def best_strategy(scan: Mapping[float, float]) -> tuple[float, float]:
    """(weight, recall) with the highest recall; ties take the smallest weight."""
    if not scan:
        raise RetrievalError("empty scan")
    best_w = min(scan, key=lambda w: (-scan[w], w))
    return best_w, scan[best_w]


# ---------------------------------------------------------------------------
# per-label benchmark


@dataclass
class BenchmarkRow:
    dataset: str
    label: str
    dense_recall: float
    lexical_recall: float
    best_recall: float
    best_weight: float
    query_count: int

    def validate(self) -> "BenchmarkRow":
        if self.best_recall < max(self.dense_recall, self.lexical_recall) - 1e-12:
            raise RetrievalError(
                f"best recall {self.best_recall} below a pure strategy for {self.label}"
            )
        return self


BENCHMARK_LABELS = (LabelClass.REASONING, LabelClass.FACT_SINGLE, LabelClass.SUMMARY)


@dataclass
class BenchmarkReport:
    rows: list[BenchmarkRow]
    notes: list[str]
    scans: dict[str, dict[float, float]]  # label -> weight -> recall

    def __iter__(self):
        # unpacks as (rows, notes) for the common case
        return iter((self.rows, self.notes))


def benchmark_by_label(
    dataset: str,
    qa_records: Sequence[QARecord],
    lexical: LexicalIndex,
    dense: DenseIndex,
    gateway: LlmGateway,
    params: HybridParams | None = None,
    weights: Sequence[float] = SCAN_WEIGHTS,
    rerank_gateway: LlmGateway | None = None,
    passages: Mapping[str, str] | None = None,
) -> BenchmarkReport:
    """One Inclusive row over every record plus one row per non-empty label.

    Unanswerable questions count toward Inclusive only. Labels with zero
    records are skipped with a note. Passing ``rerank_gateway`` (with the
    id -> passage text map) reorders every fused top-n with the rerank
    endpoint before recall is measured.
    """
    params = (params or HybridParams()).validate()
    records = [r for r in qa_records if r.question]
    if not records:
        raise RetrievalError("no benchmark queries")
    if 0.0 not in weights or 1.0 not in weights:
        raise RetrievalError("weights must include 0 and 1 for the pure columns")
    if rerank_gateway is not None and passages is None:
        raise RetrievalError("reranking needs the id -> passage text map")

    prepared = {
        rec.id: prepare_query(rec.question, lexical, dense, params, gateway)
        for rec in records
    }
    ground = {rec.id: rec.context_id for rec in records}
    questions = {rec.id: rec.question for rec in records}

    per_weight_rank: dict[float, dict[str, list[str]]] = {}
    for w in weights:
        per_weight_rank[w] = {
            qid: [doc for doc, _ in qc.fuse(w, params.top_n)]
            for qid, qc in prepared.items()
        }
    if rerank_gateway is not None:
        for w in weights:
            for qid, ranked_ids in per_weight_rank[w].items():
                reranked = rerank_stage(
                    questions[qid], [(doc, 0.0) for doc in ranked_ids],
                    passages, rerank_gateway,
                )
                per_weight_rank[w][qid] = [doc for doc, _ in reranked]

    def scan_for(ids: list[str]) -> dict[float, float]:
        subset_ground = {qid: ground[qid] for qid in ids}
        return {
            w: recall_at_n({qid: per_weight_rank[w][qid] for qid in ids},
                           subset_ground, n=params.top_n)
            for w in weights
        }

    rows: list[BenchmarkRow] = []
    notes: list[str] = []
    scans: dict[str, dict[float, float]] = {}

    def emit(label: str, ids: list[str]) -> None:
        scan = scan_for(ids)
        scans[label] = scan
        w, recall = best_strategy(scan)
        rows.append(
            BenchmarkRow(
                dataset=dataset, label=label,
                dense_recall=scan[0.0], lexical_recall=scan[1.0],
                best_recall=recall, best_weight=w, query_count=len(ids),
            ).validate()
        )

    emit("Inclusive", [r.id for r in records])
    for label in BENCHMARK_LABELS:
        ids = [r.id for r in records if r.predicted_label == label]
        if not ids:
            notes.append(f"label {label.value} has no records; row omitted")
            continue
        emit(label.value, ids)
    return BenchmarkReport(rows=rows, notes=notes, scans=scans)


# ---------------------------------------------------------------------------
# persistence


def save_indexes(directory: str | Path, lexical: LexicalIndex, dense: DenseIndex) -> None:
    """Write a postings file, a vectors file, and a versioned manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": INDEX_FORMAT_VERSION,
        "model_id": dense.model_id,
        "dim": dense.dim,
        "k1": lexical.k1,
        "b": lexical.b,
        "doc_count": lexical.doc_count,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lex_payload = {
        "postings": {t: [[d, tf] for d, tf in pl] for t, pl in sorted(lexical.postings.items())},
        "doc_lengths": dict(sorted(lexical.doc_lengths.items())),
    }
    (directory / "lexical.json").write_text(
        json.dumps(lex_payload, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
    )
    np.savez(directory / "vectors.npz",
             ids=np.array(dense.ids, dtype=object), vectors=dense.vectors)


def load_indexes(directory: str | Path) -> tuple[LexicalIndex, DenseIndex]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format_version") != INDEX_FORMAT_VERSION:
        raise RetrievalError(
            f"unsupported index format {manifest.get('format_version')!r}"
        )
    lex_payload = json.loads((directory / "lexical.json").read_text(encoding="utf-8"))
    doc_lengths = {k: int(v) for k, v in lex_payload["doc_lengths"].items()}
    lexical = LexicalIndex(
        postings={t: [(d, int(tf)) for d, tf in pl] for t, pl in lex_payload["postings"].items()},
        doc_lengths=doc_lengths,
        avgdl=sum(doc_lengths.values()) / len(doc_lengths),
        doc_count=len(doc_lengths),
        k1=float(manifest["k1"]),
        b=float(manifest["b"]),
    )
    with np.load(directory / "vectors.npz", allow_pickle=True) as data:
        ids = [str(x) for x in data["ids"]]
        vectors = np.asarray(data["vectors"], dtype=np.float64)
    dense = DenseIndex(ids=ids, vectors=vectors, dim=int(manifest["dim"]),
                       model_id=str(manifest["model_id"]))
    return lexical, dense
