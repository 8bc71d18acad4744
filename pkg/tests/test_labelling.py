import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from ragatlas import (
    ContextRecord,
    LabelClass,
    QARecord,
    LlmGateway,
    GatewayConfig,
    classify_pair,
    confusion_matrix,
    fleiss_kappa,
    label_dataset,
    majority_vote,
    render_label_prompt,
)
from ragatlas.labelling import (
    DISCARDED,
    LabelError,
    agreement_report,
    attach_annotator_labels,
    fleiss_kappa_detail,
    ingest_annotator_labels,
)

F, S, R, U = (LabelClass.FACT_SINGLE, LabelClass.SUMMARY,
              LabelClass.REASONING, LabelClass.UNANSWERABLE)


# -- prompt rendering ---------------------------------------------------------


def test_label_prompt_substitution_slots():
    prompt = render_label_prompt("X", "Y")
    assert "[[X]]" in prompt and "[[Y]]" in prompt
    for name in ("fact_single", "summary", "reasoning", "unanswerable"):
        assert f"label_name: {name}" in prompt
    assert '{"label_name": "selected_label_name"' in prompt


def test_label_prompt_requires_inputs():
    with pytest.raises(ValueError):
        render_label_prompt("", "q")


# -- classification -----------------------------------------------------------


def _gw(backend):
    return LlmGateway(backend, GatewayConfig())


def test_classify_playback(backend):
    prompt = render_label_prompt("ctx", "q")
    backend.script_chat(prompt, '{"label_name":"reasoning","reason":"inferred"}')
    judgement = classify_pair("ctx", "q", _gw(backend))
    assert judgement.label is R and judgement.reason == "inferred"


def test_classify_retries_once_on_bad_label(backend):
    prompt = render_label_prompt("ctx", "q")
    backend.script_chat(prompt,
                        '{"label_name":"factoid","reason":"bad"}',
                        '{"label_name":"summary","reason":"good"}')
    assert classify_pair("ctx", "q", _gw(backend)).label is S


def test_classify_twice_invalid_fails(backend):
    prompt = render_label_prompt("ctx", "q")
    backend.script_chat(prompt, "not json at all")
    with pytest.raises(LabelError):
        classify_pair("ctx", "q", _gw(backend))


def test_label_dataset_composition_and_failures(backend):
    contexts = {f"c{i}": ContextRecord(id=f"c{i}", text=f"text {i}") for i in range(5)}
    qas = [QARecord(id=f"q{i}", context_id=f"c{i}", question=f"why {i}?")
           for i in range(5)]
    replies = ["fact_single", "fact_single", "summary", "unanswerable"]
    for i, lab in enumerate(replies):
        prompt = render_label_prompt(f"text {i}", f"why {i}?")
        backend.script_chat(prompt, json.dumps({"label_name": lab, "reason": ""}))
    backend.script_chat(render_label_prompt("text 4", "why 4?"), "garbage")
    result = label_dataset(qas, contexts, _gw(backend))
    comp = result.manifest.label_composition
    assert comp[F] == 0.5 and comp[S] == 0.25 and comp[U] == 0.25
    assert R not in comp
    assert result.failed_ids == ["q4"]
    # exactly one bucket per record
    labelled = {q.id for q in result.records if q.predicted_label}
    failed = set(result.failed_ids)
    assert labelled | failed == {q.id for q in qas} and not labelled & failed


def test_label_dataset_empty(backend):
    result = label_dataset([], {}, _gw(backend))
    assert result.manifest.qa_count == 0
    assert result.manifest.label_composition == {}


# -- majority vote ------------------------------------------------------------


def test_majority_strict():
    assert majority_vote([F, F, F, S]) is F


def test_majority_tie_discards():
    assert majority_vote([F, F, S, S]) == DISCARDED


def test_majority_plurality_discards():
    assert majority_vote([F, S, R, U]) == DISCARDED


def test_majority_needs_two():
    with pytest.raises(ValueError):
        majority_vote([F])


@settings(max_examples=100)
@given(st.lists(st.sampled_from([F, S, R, U]), min_size=2, max_size=9))
def test_majority_never_returns_minority(labels):
    winner = majority_vote(labels)
    if winner != DISCARDED:
        assert labels.count(winner) * 2 > len(labels)


# -- Fleiss' kappa ------------------------------------------------------------

HAND_A = [F, F, F, S, S, R, R, U, U, F]
HAND_B = [F, F, S, S, S, R, U, U, U, F]
HAND_KAPPA = 53 / 73  # direct-formula oracle: P̄=0.8, P̄e=0.27


def oracle_fleiss(a, b):
    """Independent direct application of the 1971 two-rater formula."""
    cats = [F, S, R, U]
    n_items, n_raters = len(a), 2
    table = [[ (ai is c) + (bi is c) for c in cats] for ai, bi in zip(a, b)]
    pa = sum((sum(x * x for x in row) - n_raters) / (n_raters * (n_raters - 1))
             for row in table) / n_items
    pj = [sum(row[j] for row in table) / (n_items * n_raters) for j in range(len(cats))]
    pe = sum(p * p for p in pj)
    return (pa - pe) / (1 - pe)


def test_kappa_hand_case():
    assert fleiss_kappa(HAND_A, HAND_B) == pytest.approx(HAND_KAPPA, abs=1e-12)
    assert oracle_fleiss(HAND_A, HAND_B) == pytest.approx(HAND_KAPPA, abs=1e-12)


def test_kappa_identical_is_one():
    seq = [F, S, R, U, F, S]
    assert fleiss_kappa(seq, seq) == pytest.approx(1.0, abs=1e-12)


def test_kappa_symmetric():
    assert fleiss_kappa(HAND_A, HAND_B) == pytest.approx(
        fleiss_kappa(HAND_B, HAND_A), abs=1e-15
    )


def test_kappa_chance_level_near_zero():
    rng = random.Random(42)
    cats = [F, S, R, U]
    a = [rng.choice(cats) for _ in range(10_000)]
    b = [rng.choice(cats) for _ in range(10_000)]
    assert abs(fleiss_kappa(a, b)) <= 0.05


def test_kappa_degenerate_single_category():
    kappa, degenerate = fleiss_kappa_detail([F, F, F], [F, F, F])
    assert kappa == 1.0 and degenerate


def test_kappa_length_mismatch():
    with pytest.raises(ValueError):
        fleiss_kappa([F], [F, S])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from([F, S, R, U]),
                          st.sampled_from([F, S, R, U])),
                min_size=1, max_size=60))
def test_kappa_matches_oracle_property(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    ours, degenerate = fleiss_kappa_detail(a, b)
    if not degenerate:
        assert ours == pytest.approx(oracle_fleiss(a, b), abs=1e-12)
        assert -1.0 <= ours <= 1.0


# -- confusion matrix ---------------------------------------------------------


def test_confusion_diagonal():
    labels = [F, S, R, U, F]
    cm = confusion_matrix(labels, labels)
    assert cm.counts[0][0] == 2
    assert all(cm.counts[i][j] == 0 for i in range(4) for j in range(4) if i != j)
    assert cm.row_normalized[0][0] == 1.0


def test_confusion_single_off_diagonal():
    cm = confusion_matrix([F], [S])
    assert cm.counts[1][0] == 1  # row = reference(summary), col = predicted(fact)
    assert sum(map(sum, cm.counts)) == 1


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from([F, S, R, U]),
                          st.sampled_from([F, S, R, U])),
                min_size=1, max_size=40))
def test_confusion_rows_sum_to_one(pairs):
    cm = confusion_matrix([p[0] for p in pairs], [p[1] for p in pairs])
    for row_counts, row_norm in zip(cm.counts, cm.row_normalized):
        if sum(row_counts):
            assert sum(row_norm) == pytest.approx(1.0, abs=1e-9)
        else:
            assert row_norm == [0.0, 0.0, 0.0, 0.0]


def test_confusion_length_mismatch():
    with pytest.raises(ValueError):
        confusion_matrix([F], [F, S])


# -- annotator ingestion and agreement report ---------------------------------


def test_annotator_ingestion_and_report(tmp_path):
    rows = []
    labels = {
        "q0": [F, F, F, S],
        "q1": [S, S, S, S],
        "q2": [F, S, R, U],   # no consensus
        "q3": [R, R, U, R],
    }
    for qa_id, labs in labels.items():
        for idx, lab in enumerate(labs):
            rows.append({"qa_id": qa_id, "annotator_index": idx, "label": lab.value})
    path = tmp_path / "annotations.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows), encoding="utf-8")

    table = ingest_annotator_labels(path)
    qas = [QARecord(id=q, context_id="c", question="?") for q in labels]
    assert attach_annotator_labels(qas, table) == 4
    assert qas[0].annotator_labels == [F, F, F, S]

    report = agreement_report([qa.annotator_labels for qa in qas])
    assert report.item_count == 4
    assert report.discarded_count == 1
    assert set(report.kappas) == {0, 1, 2, 3}
    report.validate()


def test_agreement_report_with_model_labels():
    table = [[F, F, F], [S, S, S], [R, R, R], [F, F, S]]
    model = [F, S, R, F]
    report = agreement_report(table, model)
    assert set(report.model_kappas) == set(report.kappas)
    drops = report.relative_drops()
    assert all(isinstance(v, float) for v in drops.values())
