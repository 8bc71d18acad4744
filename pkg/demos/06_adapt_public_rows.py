"""Adapt raw public-dataset rows into the canonical corpus.

Shows the per-dataset rules: passage concatenation, positive-context
selection, the 10 000-character cap (drop, never truncate), and seeded
subsampling for labelling budgets.
"""

from ragatlas import adapt_public_dataset, sample_subset

msmarco_rows = [
    {
        "query_id": "101",
        "query": "what voltage does the vx-9 use",
        "passages": {"passage_text": [f"passage {i} about the VX-9 sensor."
                                      for i in range(1, 11)]},
        "answers": ["3.3 V"],
    },
    {
        "query_id": "102",
        "query": "oversized context",
        "passages": {"passage_text": ["x" * 10_001]},
        "answers": [],
    },
]
contexts, qas, report = adapt_public_dataset("msmarco", msmarco_rows)
print("msmarco:", report)
print("  concatenated context starts:", contexts[0].text[:40], "...")

hotpot_rows = [
    {"id": "h1", "question": "who designed the bridge?", "answer": "the engineer",
     "positive_context": "The bridge was designed by the engineer in 1901.",
     "negative_context": "Coffee beans are roasted at 200 C."},
]
contexts, qas, report = adapt_public_dataset("hotpotqa", hotpot_rows)
print("\nhotpotqa keeps only the positive context:")
print("  ", contexts[0].text)

squad_rows = [
    {"title": "Bridges", "paragraphs": [
        {"context": "First paragraph about arches.",
         "qas": [{"id": "s1", "question": "what shape?",
                  "answers": [{"text": "arches"}]}]},
        {"context": "Second paragraph about cables.",
         "qas": [{"id": "s2", "question": "what holds it?", "answers": [],
                  "is_impossible": True}]},
    ]},
]
contexts, qas, report = adapt_public_dataset("squad2", squad_rows)
print(f"\nsquad2: {len(contexts)} paragraph contexts, {len(qas)} qas "
      f"(second answer empty: {qas[1].answer == ''})")

subset = sample_subset(list(range(100)), n=10, seed=7)
print("\nseeded 10-of-100 subsample:", subset)
print("same seed, same subset:", subset == sample_subset(list(range(100)), 10, 7))
