import pytest

from tabrag.prompts import DEFAULT_REGISTRY, TemplateError, TemplateRegistry, render


def test_question_annotation_render():
    prompt = render(
        "question_annotation",
        {
            "seed_questions": "1. [A&S] seed?",
            "key_words_derived_from_table_titles": "cars, makers",
            "overlapping_values": "amc; bmw",
        },
    )
    assert "generate a total of 10 questions" in prompt
    assert "cars, makers" in prompt
    assert "amc; bmw" in prompt
    assert "{" not in prompt.replace("{", "", 0) or "{seed_questions}" not in prompt


def test_missing_binding_named():
    with pytest.raises(TemplateError, match="seed_questions"):
        render(
            "question_annotation",
            {
                "key_words_derived_from_table_titles": "k",
                "overlapping_values": "v",
            },
        )


def test_unknown_binding_rejected():
    with pytest.raises(TemplateError, match="bogus"):
        render("insight_annotation", {"question": "q", "question_relevant_knowledge": "k", "bogus": "x"})


def test_unknown_template():
    with pytest.raises(TemplateError, match="nope"):
        render("nope", {})


def test_render_deterministic():
    bindings = {"question": "q?", "question_relevant_knowledge": "facts"}
    assert render("insight_annotation", bindings) == render("insight_annotation", bindings)


def test_all_templates_have_placeholders_resolved():
    samples = {name: DEFAULT_REGISTRY.get(name) for name in DEFAULT_REGISTRY.names()}
    for name, tpl in samples.items():
        bindings = {p: f"<{p}>" for p in tpl.placeholders}
        rendered = tpl.render(bindings)
        for p in tpl.placeholders:
            assert "{" + p + "}" not in rendered


def test_fact_expansion_keeps_code_skeleton():
    tpl = DEFAULT_REGISTRY.get("fact_expansion")
    assert "def expand_facts(dataframe, patterns):" in tpl.body
    assert tpl.placeholders == {"table_schemas", "natural_language_facts"}


def test_override_directory(tmp_path):
    (tmp_path / "insight_generation.txt").write_text("Custom: {question} {serialized_tables}")
    reg = TemplateRegistry(overrides_dir=tmp_path)
    out = reg.render("insight_generation", {"question": "q", "serialized_tables": "t"})
    assert out == "Custom: q t"
    # untouched templates still present
    assert "break the given insight down" in reg.get("claim_decomposition").body
