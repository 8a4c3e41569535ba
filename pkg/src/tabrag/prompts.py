"""Prompt template registry.

Templates use ``{placeholder}`` slots resolved by exact substitution (no
``str.format``, so literal braces elsewhere in a template are safe).  The
default catalog below drives every LLM-dependent step; any template can be
overridden by dropping a ``<name>.txt`` file into a templates directory and
pointing the registry at it.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

_PLACEHOLDER = re.compile(r"\{([a-z][a-z0-9_]*)\}")


class TemplateError(KeyError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> frozenset[str]:
        return frozenset(_PLACEHOLDER.findall(self.body))

    def render(self, bindings: dict[str, str]) -> str:
        missing = self.placeholders - bindings.keys()
        if missing:
            raise TemplateError(
                f"template {self.name!r} missing binding for {sorted(missing)[0]!r}"
            )
        extra = bindings.keys() - self.placeholders
        if extra:
            raise TemplateError(
                f"template {self.name!r} got unknown binding {sorted(extra)[0]!r}"
            )
        out = self.body
        for key, value in bindings.items():
            out = out.replace("{" + key + "}", value)
        return out


QUESTION_ANNOTATION = """\
[Instruction]
You are a helpful assistant that generate questions based on keywords derived from the table titles and overlapping values that contain information about relationships between tables. Please refer to the given examples to capture the insight-level pattern, and generate a total of 10 questions.
Format each question on its own line as "N. [TYPE] question text", where TYPE is one of A&S, C&R, P&O, T&P.

[Inputs]
Examples: {seed_questions}
Keywords: {key_words_derived_from_table_titles}
Overlapping values: {overlapping_values}

[Output]
Questions:
"""

FACT_EXPANSION = """\
[Instruction]
You are a helpful assistant that write a Python code to extract enriched facts from the given natural language facts based on table schemas. Please write a Python code in the following format.

```python
import pandas as pd # can import additional python libraries if necessary

def extract_patterns(dataframe, source_facts):
    ###CODE###
    return patterns

def expand_facts(dataframe, patterns):
    \"\"\"Expand facts

    [Param]
    dataframe : pd.DataFrame
    patterns  : List[str]

    [Return]
    expanded_facts_list : List[str]
    \"\"\"
    ###CODE_WITH_ITERATION###

    return expanded_facts_list
```

[Inputs]
Table schemas: {table_schemas}
NL facts: {natural_language_facts}

[Output]
Python code:
"""

KNOWLEDGE_EXTRACTION = """\
[Instruction]
You are a helpful assistant that extract knowledge from natural language context that are relevant to the given question. Please filter out irrelevant content and extract question-relevant knowledge.
Format each extracted fact on its own line as "N. fact".

[Inputs]
Question: {question}
NL context: {expanded_natural_language_facts}

[Output]
Question-relevant knowledge:
"""

INSIGHT_ANNOTATION = """\
[Instruction]
You are a helpful assistant that generate an insight to answer the given question using knowledge. Please generate an insight.

[Inputs]
Question: {question}
Knowledge: {question_relevant_knowledge}

[Output]
Insight:
"""

INSIGHT_GENERATION = """\
[Instruction]
You are a helpful assistant that generate an insight to answer the given question using the provided tables. Please generate an insight.

[Inputs]
Question: {question}
Tables: {serialized_tables}

[Output]
Insight:
"""

_VERDICT_FORMAT = (
    'For each criterion, answer on its own line as "Criterion N: PASS" or '
    '"Criterion N: FAIL", optionally followed by a brief rationale.'
)

VERIFY_RELEVANCE = f"""\
[Instruction]
You are a strict verifier for evaluate relevance. Please verify whether the given multi-table set and question pair is relevant based on the given criteria.
{_VERDICT_FORMAT}

Criterion 1: Does the question focus on the relationships between the tables in the multi-table set?
Criterion 2: Does the question relate to all the tables in the multi-table set?
Criterion 3: Does the question rely solely on the information in the multi-table set for an answer?
Criterion 4: Does the question avoid requiring information that is not present in the multi-table set?

[Inputs]
Multi-table set: {{serialized_tables}}
Question: {{question}}

[Output]
Verification:
"""

VERIFY_FAITHFULNESS = f"""\
[Instruction]
You are a strict verifier for evaluate faithfulness. Please verify whether the given multi-table set and insight pair is faithful based on the given criteria.
{_VERDICT_FORMAT}

Criterion 1: Does the insight relate to all tables within the multi-table set?
Criterion 2: Does the insight rely solely on the information within the multi-table set?
Criterion 3: Does the insight include all necessary details from the multi-table set?
Criterion 4: Does the insight provide a clear and unambiguous response based on the multi-table set?

[Inputs]
Multi-table set: {{serialized_tables}}
Insight: {{insight}}

[Output]
Verification:
"""

VERIFY_COMPLETENESS = f"""\
[Instruction]
You are a strict verifier for evaluate completeness. Please verify whether the given question and insight pair is complete based on the given criteria.
{_VERDICT_FORMAT}

Criterion 1: Does the insight directly relate to the question?
Criterion 2: Does the insight fully address all aspects of the question?
Criterion 3: Does the insight unfold logically and without contradictions in response to the question?
Criterion 4: Does the insight remain clear and understandable in the context of the question?

[Inputs]
Question: {{question}}
Insight: {{insight}}

[Output]
Verification:
"""

CLAIM_DECOMPOSITION = """\
[Instruction]
You are a helpful assistant tasked with decomposing a given insight according to multiple table schemas. Your goal is to break the given insight down into atomic-level claims.
Format each claim on its own line as "N. claim".

[Inputs]
Table schemas: {serialized_table_schemas}
Insight: {insight}

[Output]
Decomposed claim set:
"""

CLAIM_VERIFICATION = """\
[Instruction]
You will be given multiple tables and a claim. Your task is to verify whether the claim is faithful to the data in the given tables.
Answer with a single word: true or false.

[Inputs]
Tables: {serialized_tables}
Claim: {decomposed_claim}

[Output]
Verification:
"""

TOPIC_DECOMPOSITION = """\
[Instruction]
You are a helpful assistant tasked with decomposing a given insight based on a question. Your goal is to extract atomic-level topics from the given insight.
Format each topic on its own line as "N. topic".

[Inputs]
Question: {question}
Insight: {insight}

[Output]
Decomposed topic set:
"""

TOPIC_MATCHING = """\
[Instruction]
You will be given two topic sets. Your task is to match topics bidirectionally based on their semantic similarity, ensuring that both sets are treated with equal importance.
Answer with the 1-based indices of the matched topics, aligned pairwise, as two bracketed lists.

[Inputs]
Topic set A: {decomposed_ground_truth_topic_set}
Topic set B: {decomposed_predicted_topic_set}

[Outputs]
Matched topic subset of A:
Matched topic subset of B:
"""

_DEFAULTS = {
    "question_annotation": QUESTION_ANNOTATION,
    "fact_expansion": FACT_EXPANSION,
    "knowledge_extraction": KNOWLEDGE_EXTRACTION,
    "insight_annotation": INSIGHT_ANNOTATION,
    "insight_generation": INSIGHT_GENERATION,
    "verify_relevance": VERIFY_RELEVANCE,
    "verify_faithfulness": VERIFY_FAITHFULNESS,
    "verify_completeness": VERIFY_COMPLETENESS,
    "claim_decomposition": CLAIM_DECOMPOSITION,
    "claim_verification": CLAIM_VERIFICATION,
    "topic_decomposition": TOPIC_DECOMPOSITION,
    "topic_matching": TOPIC_MATCHING,
}


class TemplateRegistry:
    def __init__(self, overrides_dir: str | Path | None = None):
        self._templates = {name: PromptTemplate(name, body) for name, body in _DEFAULTS.items()}
        if overrides_dir is not None:
            for path in sorted(Path(overrides_dir).glob("*.txt")):
                self._templates[path.stem] = PromptTemplate(
                    path.stem, path.read_text(encoding="utf-8")
                )

    def get(self, name: str) -> PromptTemplate:
        try:
            return self._templates[name]
        except KeyError:
            raise TemplateError(f"unknown template {name!r}") from None

    def render(self, name: str, bindings: dict[str, str]) -> str:
        return self.get(name).render(bindings)

    def names(self) -> list[str]:
        return sorted(self._templates)


DEFAULT_REGISTRY = TemplateRegistry()


def render(name: str, bindings: dict[str, str]) -> str:
    """Render a template from the default registry."""
    return DEFAULT_REGISTRY.render(name, bindings)
