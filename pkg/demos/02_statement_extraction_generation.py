"""Generate grounded Q&As of each requested label from one context.

The statement-extraction pipeline is answer-first: derive statements from
the context, then write a question each statement answers. The chosen
statement IS the answer, verbatim, which keeps generations grounded.
"""

from ragatlas import (
    ContextRecord,
    GatewayConfig,
    LabelClass,
    LlmGateway,
    ScriptedBackend,
    build_statement_set,
    generate_labeled_qa,
    generate_simple_qa,
)
from ragatlas.gateway import stub_responder

context = ContextRecord(
    id="paris", source="wiki",
    text="Paris is the capital of France. The population of Paris is "
         "estimated to be 2,102,650 residents as of January 2023. The Paris "
         "Region had a GDP of 765 billion euros in 2021. The city hosts the "
         "headquarters of several major European institutions.",
)

gateway = LlmGateway(ScriptedBackend(responder=stub_responder),
                     GatewayConfig(model_id="demo-generator"))

# Build the statement pools once, reuse them for all three labels.
statements = build_statement_set(context, gateway,
                                 kinds=("factual", "summary", "conclusion"))
print(f"Theme: {statements.theme.text}")
print(f"Factual statements ({len(statements.factual)}):")
for s in statements.factual:
    print(f"  - {s}")
print(f"Summary statements: {len(statements.summary)}; "
      f"conclusions: {len(statements.conclusion)}")

print("\nOne generated Q&A per requested label:")
for label in (LabelClass.FACT_SINGLE, LabelClass.SUMMARY, LabelClass.REASONING):
    record = generate_labeled_qa(context, label, seed=42, gateway=gateway,
                                 statement_set=statements)
    assert record.answer in statements.of_kind(record.statement_kind)
    print(f"  [{label.value} -> {record.statement_kind}]")
    print(f"    Q: {record.question}")
    print(f"    A: {record.answer}")

print("\nSingle-prompt baseline (tends to produce fact_single only):")
simple = generate_simple_qa(context, gateway)
print(f"    Q: {simple.question}")
print(f"    A: {simple.answer}")
