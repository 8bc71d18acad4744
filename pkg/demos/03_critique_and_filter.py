"""Judge generated Q&As on quality criteria, then filter on the verdicts."""

from ragatlas import (
    ContextRecord,
    Criterion,
    FilterPolicy,
    GatewayConfig,
    LabelClass,
    LlmGateway,
    QARecord,
    ScriptedBackend,
    critique_suite,
    filter_records,
    rescale,
)
from ragatlas.critique import DEFAULT_SUITE
from ragatlas.gateway import stub_responder

contexts = {
    f"c{i}": ContextRecord(id=f"c{i}", source="demo",
                           text=f"Passage {i} explains procedure {i} in detail. "
                                f"It lists prerequisites and timings.")
    for i in range(4)
}
records = [
    QARecord(id=f"g{i}", context_id=f"c{i}",
             question=f"What does procedure {i} require?",
             answer=f"Procedure {i} requires listed prerequisites.",
             predicted_label=label, method=method)
    for i, (label, method) in enumerate([
        (LabelClass.FACT_SINGLE, "simple_prompt"),
        (LabelClass.SUMMARY, "statement_extraction"),
        (LabelClass.REASONING, "statement_extraction"),
        (LabelClass.UNANSWERABLE, "statement_extraction"),
    ])
]

gateway = LlmGateway(ScriptedBackend(responder=stub_responder),
                     GatewayConfig(model_id="demo-judge"))

print("Rating rescale: raw 1..5 ->", [rescale(r) for r in (1, 2, 3, 4, 5)])

report = critique_suite(records, contexts, DEFAULT_SUITE, gateway)
print(f"\nSuite over {len(records)} records x {len(DEFAULT_SUITE)} criteria "
      f"({report.failures} failures):")
for row in report.sorted_rows():
    print(f"  {row.label:13s} {row.criterion:22s} {row.method:21s} "
          f"mean={row.mean_scaled:.2f} n={row.count}")

policy = FilterPolicy(drop_unanswerable=True,
                      min_scaled={Criterion.STAND_ALONE: 2.0})
kept, dropped = filter_records(records, policy)
print(f"\nFilter kept {len(kept)}, dropped {len(dropped)}:")
for item in dropped:
    print(f"  {item.record.id}: {', '.join(item.reasons)}")
