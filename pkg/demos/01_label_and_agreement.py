"""Label a tiny Q&A set and measure annotator agreement.

Runs offline: the scripted backend answers the labelling prompt
deterministically, so the composition below is stable run to run.
"""

from ragatlas import (
    ContextRecord,
    GatewayConfig,
    LabelClass,
    LlmGateway,
    QARecord,
    ScriptedBackend,
    agreement_report,
    confusion_matrix,
    fleiss_kappa,
    label_dataset,
)
from ragatlas.gateway import stub_responder
from ragatlas.labelling import DISCARDED, consensus_labels

F, S, R, U = (LabelClass.FACT_SINGLE, LabelClass.SUMMARY,
              LabelClass.REASONING, LabelClass.UNANSWERABLE)

contexts = {
    "volt": ContextRecord(
        id="volt", source="datasheets",
        text="The VX-9 pressure sensor accepts a supply voltage of 3.3 V. "
             "Its output is ratiometric. Operating range spans -40 to 85 C.",
    ),
    "paper": ContextRecord(
        id="paper", source="papers",
        text="We conclude that caching improves latency by 40%, reduces cost, "
             "and simplifies failover. Limitations include stale reads.",
    ),
    "esg": ContextRecord(
        id="esg", source="reports",
        text="Electricity usage was 120 GWh in 2019, 130 GWh in 2021, and "
             "155 GWh in 2023 across all plants.",
    ),
}

qas = [
    QARecord(id="q1", context_id="volt", question="What supply voltage should I use?"),
    QARecord(id="q2", context_id="paper", question="Summarize the key findings."),
    QARecord(id="q3", context_id="esg", question="Has consumption increased since 2019?"),
    QARecord(id="q4", context_id="volt", question="Is tomato a fruit or a vegetable?"),
]

gateway = LlmGateway(ScriptedBackend(responder=stub_responder),
                     GatewayConfig(model_id="demo-judge"))

result = label_dataset(qas, contexts, gateway, dataset_name="demo")
print("Predicted labels:")
for qa in result.records:
    print(f"  {qa.id}: {qa.predicted_label.value if qa.predicted_label else 'FAILED'}"
          f"  ({qa.question})")
print("\nComposition:",
      {k.value: round(v, 2) for k, v in result.manifest.label_composition.items()})

# Four annotators labelled the same items; how much do they agree?
panel = [
    [F, F, F, S],   # q1: clear majority
    [S, S, S, S],   # q2: unanimous
    [R, R, U, R],   # q3: majority
    [U, R, F, S],   # q4: no consensus -> discarded by the vote
]
votes = consensus_labels(panel)
print("\nMajority votes:", [v.value if v != DISCARDED else "discarded" for v in votes])

report = agreement_report(panel, model_labels=[qa.predicted_label
                                               for qa in result.records])
print(f"Items: {report.item_count}, discarded by vote: {report.discarded_count}")
for i in sorted(report.kappas):
    print(f"  annotator {i}: kappa vs leave-one-out majority = {report.kappas[i]:.3f}")

# Pairwise kappa between two label sequences
print("\nkappa(q-panel annotator 0, annotator 1) =",
      round(fleiss_kappa([row[0] for row in panel], [row[1] for row in panel]), 3))

cm = confusion_matrix([F, F, S, R], [F, S, S, R])
print("Confusion counts (rows = reference):")
for label, row in zip(cm.labels, cm.counts):
    print(f"  {label.value:13s} {row}")
