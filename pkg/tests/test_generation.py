import json

import pytest

from ragatlas import (
    ContextRecord,
    GatewayConfig,
    LabelClass,
    LlmGateway,
    ScriptedBackend,
    build_statement_set,
    export_finetune_dataset,
    generate_labeled_qa,
    generate_simple_qa,
    parse_bullets,
)
from ragatlas.generation import (
    GenerationError,
    Theme,
    derive_conclusions,
    extract_factual_statements,
    finetune_line,
    generate_question,
    merge_summary_statements,
    summarize_theme,
)
from ragatlas.prompts_io import load_template, render


def _gw(backend):
    return LlmGateway(backend, GatewayConfig())


CTX = ContextRecord(id="c1", text="Paris is the capital of France. "
                                  "Its population is 2.1 million.", source="demo")
THEME = Theme(text="Paris key facts")


# -- bullets -------------------------------------------------------------------


def test_parse_bullets_basic():
    assert parse_bullets("> A\n> B") == ["A", "B"]


def test_parse_bullets_ignores_prose():
    assert parse_bullets("preamble\n> only one") == ["only one"]


def test_parse_bullets_absence():
    with pytest.raises(GenerationError):
        parse_bullets("no bullets")


# -- pipeline stages -----------------------------------------------------------


def theme_prompt(context):
    return render(load_template("theme"), context=context)


def test_summarize_theme_playback(backend):
    backend.script_chat(theme_prompt(CTX.text), "Electrical sensor specifications")
    theme = summarize_theme(CTX.text, _gw(backend))
    assert theme.text == "Electrical sensor specifications"


def test_summarize_theme_empty_reply(backend):
    backend.script_chat(theme_prompt(CTX.text), "   ")
    with pytest.raises(GenerationError):
        summarize_theme(CTX.text, _gw(backend))


def factual_prompt(context, theme):
    return render(load_template("factual_statements"), theme=theme.text, context=context)


def test_factual_statements_five(backend):
    reply = "\n".join(f"> Fact {i}" for i in range(5))
    backend.script_chat(factual_prompt(CTX.text, THEME), reply)
    stmts, truncated = extract_factual_statements(CTX.text, THEME, _gw(backend))
    assert len(stmts) == 5 and not truncated


def test_factual_statements_overflow_truncated(backend):
    reply = "\n".join(f"> Fact {i}" for i in range(7))
    backend.script_chat(factual_prompt(CTX.text, THEME), reply)
    stmts, truncated = extract_factual_statements(CTX.text, THEME, _gw(backend))
    assert stmts == [f"Fact {i}" for i in range(5)] and truncated


def test_factual_prompt_has_both_slots():
    prompt = factual_prompt("MY_CTX", Theme(text="MY_THEME"))
    assert "[[MY_THEME]]" in prompt and "[[MY_CTX]]" in prompt


def summary_prompt(statements, theme):
    return render(load_template("summary_statements"), theme=theme.text,
                  statements="\n".join(statements))


def test_merge_summary_three(backend):
    stmts = ["s1", "s2", "s3"]
    backend.script_chat(summary_prompt(stmts, THEME), "> m1\n> m2\n> m3")
    merged, degraded = merge_summary_statements(stmts, THEME, _gw(backend))
    assert merged == ["m1", "m2", "m3"] and not degraded


def test_merge_requires_two_inputs(backend):
    with pytest.raises(GenerationError):
        merge_summary_statements(["only"], THEME, _gw(backend))


def test_merge_degraded_count_accepted(backend):
    stmts = ["s1", "s2"]
    backend.script_chat(summary_prompt(stmts, THEME), "> m1\n> m2", "> m1\n> m2")
    merged, degraded = merge_summary_statements(stmts, THEME, _gw(backend))
    assert merged == ["m1", "m2"] and degraded


def conclusions_prompt(statements, theme):
    return render(load_template("reasoning_statements"), theme=theme.text,
                  statements="\n".join(statements))


def test_conclusions_three(backend):
    stmts = ["s1", "s2"]
    backend.script_chat(conclusions_prompt(stmts, THEME), "> c1\n> c2\n> c3")
    out, degraded = derive_conclusions(stmts, THEME, _gw(backend))
    assert out == ["c1", "c2", "c3"] and not degraded


def test_conclusions_zero_bullets_twice_errors(backend):
    stmts = ["s1", "s2"]
    backend.script_chat(conclusions_prompt(stmts, THEME), "nothing", "still nothing")
    with pytest.raises(GenerationError):
        derive_conclusions(stmts, THEME, _gw(backend))


def question_prompt(statement, theme):
    return render(load_template("question"), theme=theme.text, statement=statement)


def test_generate_question_single_bullet(backend):
    backend.script_chat(question_prompt("Paris is the capital of France", THEME),
                        "> What is the capital of France?")
    q = generate_question("Paris is the capital of France", THEME, _gw(backend))
    assert q == "What is the capital of France?"


def test_generate_question_two_bullets_twice_errors(backend):
    backend.script_chat(question_prompt("stmt", THEME), "> a?\n> b?", "> a?\n> b?")
    with pytest.raises(GenerationError):
        generate_question("stmt", THEME, _gw(backend))


# -- full labeled generation -----------------------------------------------------


def scripted_pipeline_backend():
    backend = ScriptedBackend()
    backend.script_chat(theme_prompt(CTX.text), "Paris key facts")
    backend.script_chat(factual_prompt(CTX.text, THEME),
                        "> Paris is the capital of France.\n"
                        "> The population of Paris is 2.1 million.")
    stmts = ["Paris is the capital of France.",
             "The population of Paris is 2.1 million."]
    backend.script_chat(summary_prompt(stmts, THEME),
                        "> Paris, the capital of France, has 2.1 million people.\n"
                        "> It is a large city.\n> It is in Europe.")
    backend.script_chat(conclusions_prompt(stmts, THEME),
                        "> Paris is a major EU hub.\n> It is densely populated.\n"
                        "> It anchors French policy.")
    for stmt in stmts + [
        "Paris, the capital of France, has 2.1 million people.",
        "It is a large city.", "It is in Europe.",
        "Paris is a major EU hub.", "It is densely populated.",
        "It anchors French policy.",
    ]:
        backend.script_chat(question_prompt(stmt, THEME), f"> What about: {stmt}")
    return backend


@pytest.mark.parametrize("label,kind", [
    (LabelClass.FACT_SINGLE, "factual"),
    (LabelClass.SUMMARY, "summary"),
    (LabelClass.REASONING, "conclusion"),
])
def test_generate_labeled_kind_mapping(label, kind):
    backend = scripted_pipeline_backend()
    rec = generate_labeled_qa(CTX, label, seed=3, gateway=_gw(backend))
    assert rec.requested_label is label
    assert rec.statement_kind == kind
    assert rec.method == "statement_extraction"
    # grounding: the answer is a verbatim member of the statement set
    sset = build_statement_set(CTX, _gw(scripted_pipeline_backend()),
                               kinds=("factual", "summary", "conclusion"))
    assert rec.answer in sset.of_kind(kind)


def test_generate_labeled_deterministic_seed():
    a = generate_labeled_qa(CTX, LabelClass.FACT_SINGLE, seed=11,
                            gateway=_gw(scripted_pipeline_backend()))
    b = generate_labeled_qa(CTX, LabelClass.FACT_SINGLE, seed=11,
                            gateway=_gw(scripted_pipeline_backend()))
    assert a.to_dict() == b.to_dict()


def test_generate_labeled_rejects_unanswerable():
    with pytest.raises(GenerationError):
        generate_labeled_qa(CTX, LabelClass.UNANSWERABLE, seed=0,
                            gateway=_gw(ScriptedBackend()))


def test_statement_set_reuse_makes_no_extra_calls():
    backend = scripted_pipeline_backend()
    gw = _gw(backend)
    sset = build_statement_set(CTX, gw, kinds=("factual",))
    calls_after_build = backend.chat_calls
    generate_labeled_qa(CTX, LabelClass.FACT_SINGLE, seed=1, gateway=gw,
                        statement_set=sset)
    # only the question call is added on top of the prebuilt set
    assert backend.chat_calls == calls_after_build + 1


# -- simple prompt ----------------------------------------------------------------


def simple_prompt(context):
    return render(load_template("simple_qa"), context=context)


def test_generate_simple_qa(backend):
    backend.script_chat(simple_prompt(CTX.text),
                        'Output::: {"question": "q", "answer": "a"}')
    rec = generate_simple_qa(CTX, _gw(backend))
    assert (rec.question, rec.answer, rec.method) == ("q", "a", "simple_prompt")


def test_generate_simple_missing_key_after_reask(backend):
    backend.script_chat(simple_prompt(CTX.text), '{"answer": "a"}', '{"answer": "a"}')
    with pytest.raises(GenerationError):
        generate_simple_qa(CTX, _gw(backend))


# -- fine-tune export --------------------------------------------------------------


def test_finetune_line_format():
    line = finetune_line(LabelClass.SUMMARY, "C", "Q", "A")
    assert line == {"input": "<<summary>> C", "output": "<<summary>> Q <a> A"}


def _export_records(n=10, sources=("alpha", "beta")):
    from ragatlas import QARecord

    contexts, records = {}, []
    for i in range(n):
        source = sources[i % len(sources)]
        ctx = ContextRecord(id=f"c{i}", text=f"context {i}", source=source)
        contexts[ctx.id] = ctx
        records.append(QARecord(
            id=f"g{i}", context_id=ctx.id, question=f"q{i}", answer=f"a{i}",
            requested_label=LabelClass.FACT_SINGLE, method="statement_extraction",
        ))
    return contexts, records


def test_export_excludes_holdout(tmp_path):
    contexts, records = _export_records()
    train, val = export_finetune_dataset(records, contexts, "beta", tmp_path,
                                         validation_fraction=0.2, seed=5)
    assert train.parent.name == "holdout_beta"
    rows = [json.loads(l) for l in train.read_text().splitlines()]
    rows += [json.loads(l) for l in val.read_text().splitlines()]
    assert len(rows) == 5  # the 5 alpha records
    for row in rows:
        assert row["input"].startswith("<<fact_single>> context ")
        assert " <a> " in row["output"]


def test_export_split_deterministic(tmp_path):
    contexts, records = _export_records(n=100, sources=("alpha",))
    t1, v1 = export_finetune_dataset(records, contexts, "none", tmp_path / "r1",
                                     validation_fraction=0.2, seed=9)
    t2, v2 = export_finetune_dataset(records, contexts, "none", tmp_path / "r2",
                                     validation_fraction=0.2, seed=9)
    assert len(t1.read_text().splitlines()) == 80
    assert len(v1.read_text().splitlines()) == 20
    assert t1.read_bytes() == t2.read_bytes()
    assert v1.read_bytes() == v2.read_bytes()


def test_export_rejects_total_holdout(tmp_path):
    from ragatlas import CorpusError

    contexts, records = _export_records(n=4, sources=("alpha",))
    with pytest.raises(CorpusError, match="excluded every record"):
        export_finetune_dataset(records, contexts, "alpha", tmp_path)


def test_export_requires_requested_label(tmp_path):
    from ragatlas import CorpusError, QARecord

    ctx = ContextRecord(id="c", text="t", source="s")
    rec = QARecord(id="q", context_id="c", question="q?")
    with pytest.raises(CorpusError):
        export_finetune_dataset([rec], {"c": ctx}, "other", tmp_path)
