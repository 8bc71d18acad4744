"""Scan the lexical/dense fusion weight and benchmark recall per label.

The text weight w runs from 0 (pure dense cosine search) to 1 (pure BM25).
The best weight depends on the question mix, which is the point of
labelling your data before tuning.
"""

import random

from ragatlas import (
    ContextRecord,
    GatewayConfig,
    HybridParams,
    LabelClass,
    LlmGateway,
    QARecord,
    ScriptedBackend,
    benchmark_by_label,
    best_strategy,
    build_dense_index,
    build_lexical_index,
    hybrid_search,
    scan_weights,
)

rng = random.Random(7)
topics = ["sensor calibration", "energy report", "patent claims",
          "city statistics", "cooking method", "network protocol"]
contexts = [
    ContextRecord(
        id=f"doc{i:02d}", source="demo",
        text=f"Document about {topics[i % len(topics)]} number {i}. "
             + " ".join(rng.choices("alpha beta gamma delta epsilon zeta".split(),
                                    k=12)),
    )
    for i in range(24)
]
labels = [LabelClass.FACT_SINGLE, LabelClass.SUMMARY,
          LabelClass.REASONING, LabelClass.UNANSWERABLE]
questions = [
    QARecord(id=f"q{i:02d}", context_id=ctx.id,
             question=f"what about {topics[i % len(topics)]} number {i}?",
             predicted_label=labels[i % len(labels)])
    for i, ctx in enumerate(contexts)
]

gateway = LlmGateway(ScriptedBackend(embed_dim=48),
                     GatewayConfig(model_id="demo-embedder"))
lexical = build_lexical_index(contexts)
dense = build_dense_index(contexts, gateway)

one = hybrid_search(questions[0].question, lexical, dense,
                    HybridParams(text_weight=0.1), gateway)
print(f"Top-5 for {questions[0].question!r} at w=0.1:")
for doc_id, score in one:
    print(f"  {doc_id}  fused={score:.3f}")

scan = scan_weights({q.id: q.question for q in questions},
                    {q.id: q.context_id for q in questions},
                    lexical, dense, gateway)
print("\nWeight scan (Recall@5):")
for w in sorted(scan):
    print(f"  w={w:4.2f}  recall={scan[w]:.3f}")
w_best, r_best = best_strategy(scan)
print(f"Best strategy: w={w_best} with recall {r_best:.3f}")

rows, notes = benchmark_by_label("demo", questions, lexical, dense, gateway)
print("\nPer-label benchmark (dense | lexical | best @ weight):")
for row in rows:
    print(f"  {row.label:12s} {row.dense_recall:.3f} | {row.lexical_recall:.3f} | "
          f"{row.best_recall:.3f} @ {row.best_weight:.2f}  (n={row.query_count})")
for note in notes:
    print("  note:", note)
