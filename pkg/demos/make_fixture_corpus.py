"""Write a small fixture corpus (contexts, Q&As, annotator labels) to a
directory, ready for configs/example_run.yaml.

Usage: python demos/make_fixture_corpus.py [out_dir]
"""

import json
import random
import sys
from pathlib import Path

from ragatlas import ContextRecord, QARecord

TOPICS = [
    ("sensor", "The VX-{i} sensor accepts {v} V supply. It outputs a ratiometric "
               "signal. The operating range is -40 to 85 C."),
    ("paper", "Study {i} concludes that caching cuts latency by {v}%. It also "
              "reduces cost. Stale reads remain a limitation."),
    ("report", "Plant {i} used {v} GWh in 2021. Usage was lower in 2019. "
               "Totals are audited annually."),
    ("manual", "Device {i} pairs over Bluetooth. Hold button {v} for three "
               "seconds. The LED blinks twice when ready."),
]


def main() -> None:
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(0)

    contexts, qas, annotations = [], [], []
    panel_choices = ["fact_single", "summary", "reasoning", "unanswerable"]
    for i in range(12):
        kind, template = TOPICS[i % len(TOPICS)]
        ctx = ContextRecord(id=f"ctx{i:02d}", source="fixture",
                            text=template.format(i=i, v=rng.randint(2, 40)))
        contexts.append(ctx)
        qas.append(QARecord(
            id=f"qa{i:02d}", context_id=ctx.id,
            question=f"What does the {kind} {i} specify?",
            answer=ctx.text.split(".")[0],
        ))
        majority = rng.choice(panel_choices)
        for annotator in range(4):
            label = majority if annotator < 3 else rng.choice(panel_choices)
            annotations.append(
                {"qa_id": f"qa{i:02d}", "annotator_index": annotator, "label": label}
            )

    with (out / "contexts.jsonl").open("w", encoding="utf-8") as fh:
        for c in contexts:
            fh.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    with (out / "qas.jsonl").open("w", encoding="utf-8") as fh:
        for q in qas:
            fh.write(json.dumps(q.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    with (out / "annotations.jsonl").open("w", encoding="utf-8") as fh:
        for row in annotations:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    print(f"wrote {len(contexts)} contexts, {len(qas)} qas, "
          f"{len(annotations)} annotator rows under {out}/")


if __name__ == "__main__":
    main()
