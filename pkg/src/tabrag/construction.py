"""Benchmark construction: question annotation, fact expansion, knowledge
extraction, insight annotation, and self-verification filtering."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import QUESTION_TYPES, BenchmarkExample, Corpus, TableSet
from .gateway import ChatProvider, CompletionParams, RetryPolicy, complete_with_retry
from .insight_eval import parse_numbered_list
from .prompts import DEFAULT_REGISTRY, TemplateRegistry
from .sandbox import ExpansionProgram, SandboxError, SandboxExecutor, extract_code_block, fallback_expand
from .tables import schema_text, serialize_table

log = logging.getLogger(__name__)

_INT_TOKEN = re.compile(r"[+-]?[0-9]+")
_TAGGED_QUESTION = re.compile(r"^\s*\d+\.\s*\[(A&S|C&R|P&O|T&P)\]\s*(\S.*?)\s*$")

QUESTIONS_PER_SET = 10

STOPWORDS = frozenset(
    "a an and are as at be by for from in is it of on or the to with".split()
)

CRITERIA = ("relevance", "faithfulness", "completeness")


class ConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SeedBank:
    seeds: Mapping[str, tuple[str, ...]]
    version: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "seeds", {k: tuple(v) for k, v in self.seeds.items()}
        )

    def check_ready(self) -> None:
        missing = [t for t in QUESTION_TYPES if not self.seeds.get(t)]
        if missing:
            raise ConstructionError(f"seed bank has no seeds for types {missing}")

    def formatted(self) -> str:
        lines = []
        i = 1
        for qtype in QUESTION_TYPES:
            for seed in self.seeds.get(qtype, ()):
                lines.append(f"{i}. [{qtype}] {seed}")
                i += 1
        return "\n".join(lines)


PLACEHOLDER_SEEDS = SeedBank(
    seeds={
        "A&S": ("Summarize how the records in these tables relate across their shared entries.",),
        "C&R": ("How do the key columns of these tables connect their records, and what does that reveal?",),
        "P&O": ("What outcomes do these tables report for the shared participants, and how did they progress?",),
        "T&P": ("What changes over time do these tables show for the shared categories?",),
    }
)


def load_seed_bank(path) -> SeedBank:
    rec = json.loads(open(path, encoding="utf-8").read())
    return SeedBank(seeds=rec["seeds"], version=rec.get("version", 1))


def save_seed_bank(bank: SeedBank, path) -> None:
    payload = {"version": bank.version, "seeds": {k: list(v) for k, v in bank.seeds.items()}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)


@dataclass(frozen=True)
class Fact:
    text: str
    source_table_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValueError("fact text must be non-empty")
        object.__setattr__(self, "source_table_ids", tuple(self.source_table_ids))


@dataclass(frozen=True)
class FactSet:
    facts: tuple[Fact, ...]
    origin: str  # seed | expanded | extracted

    def __post_init__(self):
        object.__setattr__(self, "facts", tuple(self.facts))

    def texts(self) -> list[str]:
        return [f.text for f in self.facts]

    def __len__(self) -> int:
        return len(self.facts)


@dataclass(frozen=True)
class CriterionVerdict:
    passed: bool
    rationale: str


@dataclass(frozen=True)
class VerificationReport:
    criteria: Mapping[str, CriterionVerdict]

    @property
    def overall_pass(self) -> bool:
        return all(v.passed for v in self.criteria.values())

    def first_failing(self) -> str | None:
        for name in CRITERIA:
            if not self.criteria[name].passed:
                return name
        return None


# ---------------------------------------------------------------------------
# operations


def find_overlapping_values(table_set: TableSet, corpus: Corpus) -> list[tuple[str, list[str]]]:
    """Cell values appearing verbatim in at least two tables of the set,
    excluding purely numeric values, most frequent first."""
    value_tables: dict[str, set[str]] = {}
    value_count: Counter[str] = Counter()
    for tid in table_set.table_ids:
        table = corpus.tables[tid]
        for row in table.rows:
            for cell in row:
                if not cell or _INT_TOKEN.fullmatch(cell):
                    continue
                value_tables.setdefault(cell, set()).add(tid)
                value_count[cell] += 1
    overlapping = [
        (value, sorted(tables))
        for value, tables in value_tables.items()
        if len(tables) >= 2
    ]
    overlapping.sort(key=lambda item: (-value_count[item[0]], item[0]))
    return overlapping


def title_keywords(titles: Sequence[str]) -> list[str]:
    """Whitespace tokens of the titles minus stopwords, first occurrence order."""
    seen = []
    for title in titles:
        for token in title.split():
            if token.lower() in STOPWORDS or token == "-":
                continue
            if token not in seen:
                seen.append(token)
    return seen


def annotate_questions(
    table_set: TableSet,
    corpus: Corpus,
    seeds: SeedBank,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> list[tuple[str, str]]:
    """Ten candidate (question, type) pairs for a table set."""
    seeds.check_ready()
    registry = registry or DEFAULT_REGISTRY
    titles = [corpus.tables[t].title for t in table_set.table_ids]
    overlaps = find_overlapping_values(table_set, corpus)
    prompt = registry.render(
        "question_annotation",
        {
            "seed_questions": seeds.formatted(),
            "key_words_derived_from_table_titles": ", ".join(title_keywords(titles)),
            "overlapping_values": "; ".join(v for v, _ in overlaps),
        },
    )

    def parse(raw: str) -> list[tuple[str, str]] | None:
        out = []
        for line in raw.splitlines():
            m = _TAGGED_QUESTION.match(line)
            if m:
                out.append((m.group(2), m.group(1)))
        return out if len(out) == QUESTIONS_PER_SET else None

    parsed = parse(complete_with_retry(provider, prompt, params, policy))
    if parsed is None:
        log.warning("question annotation returned wrong count, reprompting once")
        parsed = parse(complete_with_retry(provider, prompt, params, policy))
    if parsed is None:
        raise ConstructionError(
            f"expected exactly {QUESTIONS_PER_SET} tagged questions for set {table_set.id}"
        )
    return parsed


def refine_seeds(bank: SeedBank, accepted: Sequence[tuple[str, str]]) -> SeedBank:
    """Fold human-approved (question, type) pairs back into the bank."""
    merged = {k: list(v) for k, v in bank.seeds.items()}
    for question, qtype in accepted:
        if qtype not in QUESTION_TYPES:
            raise ConstructionError(f"unknown question type {qtype!r}")
        bucket = merged.setdefault(qtype, [])
        if question not in bucket:
            bucket.append(question)
    return SeedBank(seeds={k: tuple(v) for k, v in merged.items()}, version=bank.version + 1)


def expand_facts(
    table_set: TableSet,
    corpus: Corpus,
    seed_facts: FactSet,
    provider: ChatProvider,
    executor: SandboxExecutor | None = None,
    fallback_enabled: bool = True,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> FactSet:
    """Grow the fact set by generating and sandbox-running an expansion
    program; failures fall back to templated row/column enumeration when
    enabled."""
    registry = registry or DEFAULT_REGISTRY
    tables = [corpus.tables[t] for t in table_set.table_ids]
    prompt = registry.render(
        "fact_expansion",
        {
            "table_schemas": "\n".join(schema_text(t).text for t in tables),
            "natural_language_facts": "\n".join(seed_facts.texts()) or "(none)",
        },
    )
    raw = complete_with_retry(provider, prompt, params, policy)
    executor = executor or SandboxExecutor()
    try:
        program = ExpansionProgram(script_text=extract_code_block(raw))
        new_texts = executor.run(program, tables, seed_facts.texts())
    except (SandboxError, ValueError) as exc:
        if not fallback_enabled:
            raise ConstructionError(f"fact expansion failed for set {table_set.id}: {exc}") from exc
        log.warning("fact expansion failed (%s); using fallback expander", exc)
        new_texts = fallback_expand(tables)
    table_ids = tuple(table_set.table_ids)
    expanded = list(seed_facts.facts)
    seen = {f.text for f in expanded}
    for text in new_texts:
        if text and text not in seen:
            seen.add(text)
            expanded.append(Fact(text=text, source_table_ids=table_ids))
    return FactSet(facts=tuple(expanded), origin="expanded")


def _normalize(text: str) -> str:
    return " ".join(text.lower().split())


def extract_knowledge(
    question: str,
    facts: FactSet,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> tuple[FactSet, int]:
    """Provider-filtered question-relevant subset of the facts; outputs not
    traceable to an input fact are dropped.  Returns (facts, dropped count)."""
    if not len(facts):
        raise ConstructionError("need a non-empty fact set")
    registry = registry or DEFAULT_REGISTRY
    prompt = registry.render(
        "knowledge_extraction",
        {"question": question, "expanded_natural_language_facts": "\n".join(facts.texts())},
    )

    def run_once() -> tuple[list[Fact], int]:
        raw = complete_with_retry(provider, prompt, params, policy)
        items = parse_numbered_list(raw) or [
            line.strip() for line in raw.splitlines() if line.strip()
        ]
        kept: list[Fact] = []
        dropped = 0
        for item in items:
            norm = _normalize(item)
            match = next(
                (
                    f
                    for f in facts.facts
                    if norm == _normalize(f.text)
                    or norm in _normalize(f.text)
                    or _normalize(f.text) in norm
                ),
                None,
            )
            if match is None:
                dropped += 1
            else:
                kept.append(Fact(text=item, source_table_ids=match.source_table_ids))
        return kept, dropped

    kept, dropped = run_once()
    if not kept:
        log.warning("knowledge extraction kept nothing, reprompting once")
        kept, dropped = run_once()
    if not kept:
        raise ConstructionError("knowledge extraction produced no traceable facts")
    if dropped:
        log.warning("knowledge extraction dropped %d untraceable outputs", dropped)
    return FactSet(facts=tuple(kept), origin="extracted"), dropped


def annotate_insight(
    question: str,
    knowledge: FactSet,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> str:
    if not len(knowledge):
        raise ConstructionError("need a non-empty knowledge set")
    registry = registry or DEFAULT_REGISTRY
    prompt = registry.render(
        "insight_annotation",
        {"question": question, "question_relevant_knowledge": "\n".join(knowledge.texts())},
    )
    text = complete_with_retry(provider, prompt, params, policy).strip()
    if not text:
        log.warning("insight annotation returned empty output, reprompting once")
        text = complete_with_retry(provider, prompt, params, policy).strip()
    if not text:
        raise ConstructionError("insight annotation produced empty output")
    return text


_CRITERION_LINE = re.compile(r"criterion\s*(\d)\s*:\s*(pass|fail)\b(.*)", re.IGNORECASE)


def parse_criterion_verdicts(text: str, expected: int = 4) -> list[bool] | None:
    found: dict[int, bool] = {}
    for line in text.splitlines():
        m = _CRITERION_LINE.search(line)
        if m:
            found[int(m.group(1))] = m.group(2).lower() == "pass"
    if set(found) != set(range(1, expected + 1)):
        return None
    return [found[i] for i in range(1, expected + 1)]


def self_verify(
    table_set: TableSet,
    corpus: Corpus,
    question: str,
    insight: str,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> VerificationReport:
    """Three verification prompts, four sub-criteria each; a criterion passes
    only when every sub-criterion passes."""
    registry = registry or DEFAULT_REGISTRY
    serialized = "\n".join(serialize_table(corpus.tables[t]) for t in table_set.table_ids)
    prompts = {
        "relevance": registry.render(
            "verify_relevance", {"serialized_tables": serialized, "question": question}
        ),
        "faithfulness": registry.render(
            "verify_faithfulness", {"serialized_tables": serialized, "insight": insight}
        ),
        "completeness": registry.render(
            "verify_completeness", {"question": question, "insight": insight}
        ),
    }
    criteria = {}
    for name, prompt in prompts.items():
        raw = complete_with_retry(provider, prompt, params, policy)
        verdicts = parse_criterion_verdicts(raw)
        if verdicts is None:
            raise ConstructionError(f"unparseable {name} verification verdict: {raw[:300]!r}")
        criteria[name] = CriterionVerdict(passed=all(verdicts), rationale=raw.strip())
    return VerificationReport(criteria=criteria)


# ---------------------------------------------------------------------------
# batch pipeline


@dataclass(frozen=True)
class ProvenanceRecord:
    example_id: str
    table_set_id: str
    question: str
    question_type: str
    facts: tuple[str, ...]
    knowledge: tuple[str, ...]
    insight: str
    verification: Mapping[str, bool]
    kept: bool

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "table_set_id": self.table_set_id,
            "question": self.question,
            "question_type": self.question_type,
            "facts": list(self.facts),
            "knowledge": list(self.knowledge),
            "insight": self.insight,
            "verification": dict(self.verification),
            "kept": self.kept,
        }


@dataclass
class ConstructionResult:
    examples: list[BenchmarkExample] = field(default_factory=list)
    provenance: list[ProvenanceRecord] = field(default_factory=list)
    discarded_by: Counter = field(default_factory=Counter)
    total: int = 0

    def discard_ratios(self) -> dict[str, float]:
        if not self.total:
            return {name: 0.0 for name in CRITERIA}
        return {
            name: 100.0 * self.discarded_by.get(name, 0) / self.total for name in CRITERIA
        }


def discard_stats(reports: Sequence[VerificationReport]) -> dict[str, float]:
    """Percentage of triples discarded per criterion; each failing triple is
    attributed to its first failing criterion in fixed order."""
    counts = Counter()
    for report in reports:
        failing = report.first_failing()
        if failing is not None:
            counts[failing] += 1
    total = len(reports)
    if not total:
        return {name: 0.0 for name in CRITERIA}
    return {name: 100.0 * counts.get(name, 0) / total for name in CRITERIA}


def construct_examples(
    corpus: Corpus,
    sets: Sequence[TableSet],
    seeds: SeedBank,
    provider: ChatProvider,
    executor: SandboxExecutor | None = None,
    seed_facts: Mapping[str, Sequence[str]] | None = None,
    fallback_enabled: bool = True,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> ConstructionResult:
    """Run the full pipeline over table sets, keeping only triples that pass
    self-verification.  Every triple's provenance chain is recorded."""
    result = ConstructionResult()
    seed_facts = seed_facts or {}
    kwargs = {"params": params, "policy": policy, "registry": registry}
    for table_set in sets:
        questions = annotate_questions(table_set, corpus, seeds, provider, **kwargs)
        initial = FactSet(
            facts=tuple(Fact(text=t) for t in seed_facts.get(table_set.id, ())),
            origin="seed",
        )
        facts = expand_facts(
            table_set, corpus, initial, provider, executor,
            fallback_enabled=fallback_enabled, **kwargs,
        )
        for qi, (question, qtype) in enumerate(questions, start=1):
            example_id = f"{table_set.id}#q{qi}"
            knowledge, _ = extract_knowledge(question, facts, provider, **kwargs)
            insight = annotate_insight(question, knowledge, provider, **kwargs)
            report = self_verify(table_set, corpus, question, insight, provider, **kwargs)
            result.total += 1
            kept = report.overall_pass
            if kept:
                result.examples.append(
                    BenchmarkExample(
                        id=example_id,
                        question_text=question,
                        question_type=qtype,
                        gold_table_set_id=table_set.id,
                        gold_insight=insight,
                    )
                )
            else:
                result.discarded_by[report.first_failing()] += 1
            result.provenance.append(
                ProvenanceRecord(
                    example_id=example_id,
                    table_set_id=table_set.id,
                    question=question,
                    question_type=qtype,
                    facts=tuple(facts.texts()),
                    knowledge=tuple(knowledge.texts()),
                    insight=insight,
                    verification={k: v.passed for k, v in report.criteria.items()},
                    kept=kept,
                )
            )
    return result
