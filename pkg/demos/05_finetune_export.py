"""Export a fine-tuning dataset with a hold-one-dataset-out split.

Each record becomes a flagged input/output line pair:
    input : <<label>> context text
    output: <<label>> question <a> answer
One context can appear up to three times, once per question-type flag.
"""

import json
import tempfile
from pathlib import Path

from ragatlas import ContextRecord, LabelClass, QARecord, export_finetune_dataset

contexts = {}
records = []
for i in range(12):
    source = ["squad2", "pubmedqa", "naturalq"][i % 3]
    ctx = ContextRecord(id=f"c{i}", source=source,
                        text=f"Context {i} from {source} describing topic {i}.")
    contexts[ctx.id] = ctx
    for label in (LabelClass.FACT_SINGLE, LabelClass.SUMMARY, LabelClass.REASONING):
        records.append(QARecord(
            id=f"{ctx.id}-{label.value}", context_id=ctx.id,
            question=f"What does topic {i} cover ({label.value})?",
            answer=f"Topic {i} covers the {label.value} aspect.",
            requested_label=label, method="statement_extraction",
        ))

out_dir = Path(tempfile.mkdtemp(prefix="finetune_export_"))
train, val = export_finetune_dataset(records, contexts, holdout_dataset="pubmedqa",
                                     out_dir=out_dir, validation_fraction=0.2, seed=3)

train_rows = [json.loads(line) for line in train.read_text().splitlines()]
val_rows = [json.loads(line) for line in val.read_text().splitlines()]
print(f"Wrote {train} ({len(train_rows)} rows) and {val} ({len(val_rows)} rows)")
print("pubmedqa rows excluded:",
      all("pubmedqa" not in r["input"] for r in train_rows + val_rows))
print("\nSample lines:")
for row in train_rows[:3]:
    print("  input :", row["input"])
    print("  output:", row["output"])
