"""Decomposition-based insight scoring.

Faithfulness: decompose an insight into atomic claims using the table
schemas, verify each claim against the full retrieved tables, and score the
fraction verified.  Completeness: decompose gold and predicted insights into
atomic topics conditioned on the question, match them one-to-one, and score
precision/recall/F1 over the match.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

from .gateway import ChatProvider, CompletionParams, RetryPolicy, complete_with_retry
from .prompts import DEFAULT_REGISTRY, TemplateRegistry
from .tables import SchemaText, Table, schema_text, serialize_table

log = logging.getLogger(__name__)

_NUMBERED_ITEM = re.compile(r"^\s*\d+\.\s+(\S.*?)\s*$")
_BRACKET_LIST = re.compile(r"\[([0-9,\s]*)\]")
_ANSWER_TOKEN = re.compile(r"^\s*(true|false|yes|no)\b[.!]?\s*$", re.IGNORECASE)


class EvalError(RuntimeError):
    pass


class StageError(EvalError):
    """Failure attributed to a named pipeline stage; examples with a stage
    error are reported failed, never partially scored."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class Claim:
    text: str
    source_table_ids: list[str] = field(default_factory=list)
    verdict: bool | None = None


@dataclass(frozen=True)
class TopicSet:
    topics: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "topics", tuple(self.topics))
        if len(set(self.topics)) != len(self.topics):
            raise ValueError("topic set contains duplicates")

    def __len__(self) -> int:
        return len(self.topics)


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]  # 1-based (index_in_A, index_in_B)

    @property
    def matched_a(self) -> frozenset[int]:
        return frozenset(i for i, _ in self.pairs)

    @property
    def matched_b(self) -> frozenset[int]:
        return frozenset(j for _, j in self.pairs)

    def __post_init__(self):
        if len(self.matched_a) != len(self.pairs) or len(self.matched_b) != len(self.pairs):
            raise ValueError("match result must be a partial bijection")


@dataclass(frozen=True)
class EvalScores:
    faithfulness: float
    completeness_p: float
    completeness_r: float
    completeness_f1: float
    n_claims: int
    n_verified: int
    n_topics_gold: int
    n_topics_pred: int
    n_matched: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def parse_numbered_list(text: str) -> list[str]:
    """Items of a 'N. text' list, in order of appearance."""
    return [m.group(1) for line in text.splitlines() if (m := _NUMBERED_ITEM.match(line))]


def _complete(provider: ChatProvider, prompt: str, params, policy) -> str:
    return complete_with_retry(provider, prompt, params, policy)


def _parse_with_reprompt(provider, prompt, params, policy, parse, describe):
    """Run a prompt, parse; on parse failure reprompt once, then raise."""
    raw = _complete(provider, prompt, params, policy)
    parsed = parse(raw)
    if parsed is not None:
        return parsed
    log.warning("%s: unparseable output, reprompting once", describe)
    raw2 = _complete(provider, prompt, params, policy)
    parsed = parse(raw2)
    if parsed is None:
        raise EvalError(f"{describe}: unparseable provider output: {raw2[:500]!r}")
    return parsed


def _link_tables(claim_text: str, schemas: Sequence[SchemaText]) -> list[str]:
    """Schema titles mentioned in the claim, matched case-insensitively
    against the full title and its ' - ' fields.  Traceability metadata only."""
    lowered = claim_text.lower()
    linked = []
    for schema in schemas:
        title = schema.text[len("[TITLE] "):schema.text.index(" [HEADER] ")]
        candidates = [title] + [f for f in title.split(" - ") if len(f) >= 4]
        if any(c.lower() in lowered for c in candidates):
            linked.append(title)
    return linked


def decompose_claims(
    schemas: Sequence[SchemaText],
    insight: str,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> list[Claim]:
    if not schemas:
        raise EvalError("need at least one table schema")
    if not insight.strip():
        raise EvalError("insight must be non-empty")
    registry = registry or DEFAULT_REGISTRY
    prompt = registry.render(
        "claim_decomposition",
        {
            "serialized_table_schemas": "\n".join(s.text for s in schemas),
            "insight": insight,
        },
    )
    items = _parse_with_reprompt(
        provider, prompt, params, policy,
        lambda raw: parse_numbered_list(raw) or None,
        "claim decomposition",
    )
    return [Claim(text=t, source_table_ids=_link_tables(t, schemas)) for t in items]


def parse_verdict(text: str) -> bool | None:
    m = _ANSWER_TOKEN.match(text.strip())
    if not m:
        return None
    return m.group(1).lower() in ("true", "yes")


def verify_claim(
    claim: Claim,
    tables: Sequence[Table],
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> bool:
    """Check one claim against the full serialized tables; the verdict is a
    strict true/false token, never coerced."""
    if not tables:
        raise EvalError("need at least one table")
    registry = registry or DEFAULT_REGISTRY
    prompt = registry.render(
        "claim_verification",
        {
            "serialized_tables": "\n".join(serialize_table(t) for t in tables),
            "decomposed_claim": claim.text,
        },
    )
    verdict = _parse_with_reprompt(
        provider, prompt, params, policy, parse_verdict, "claim verification"
    )
    claim.verdict = verdict
    return verdict


def faithfulness_score(verdicts: Sequence[bool]) -> float:
    """Percentage of verified claims."""
    if not verdicts:
        raise EvalError("faithfulness undefined for an empty claim set")
    return 100.0 * sum(1 for v in verdicts if v) / len(verdicts)


def decompose_topics(
    question: str,
    insight: str,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> TopicSet:
    if not question.strip() or not insight.strip():
        raise EvalError("question and insight must be non-empty")
    registry = registry or DEFAULT_REGISTRY
    prompt = registry.render(
        "topic_decomposition", {"question": question, "insight": insight}
    )

    def parse(raw: str) -> TopicSet | None:
        items = parse_numbered_list(raw)
        deduped = list(dict.fromkeys(items))
        return TopicSet(tuple(deduped)) if deduped else None

    return _parse_with_reprompt(provider, prompt, params, policy, parse, "topic decomposition")


def parse_match_subsets(text: str) -> tuple[list[int], list[int]] | None:
    """The first two bracketed integer lists in the output."""
    lists = []
    for m in _BRACKET_LIST.finditer(text):
        body = m.group(1).strip()
        if not body:
            lists.append([])
            continue
        try:
            lists.append([int(tok) for tok in body.split(",")])
        except ValueError:
            return None
    if len(lists) < 2:
        return None
    return lists[0], lists[1]


def match_topics(
    gold: TopicSet,
    pred: TopicSet,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> MatchResult:
    """Bidirectional one-to-one topic matching; subset outputs of unequal
    size are rejected."""
    if not len(gold) or not len(pred):
        raise EvalError("both topic sets must be non-empty")
    registry = registry or DEFAULT_REGISTRY

    def fmt(ts: TopicSet) -> str:
        return "\n".join(f"{i}. {t}" for i, t in enumerate(ts.topics, start=1))

    prompt = registry.render(
        "topic_matching",
        {
            "decomposed_ground_truth_topic_set": fmt(gold),
            "decomposed_predicted_topic_set": fmt(pred),
        },
    )

    def parse(raw: str) -> MatchResult | None:
        subsets = parse_match_subsets(raw)
        if subsets is None:
            return None
        sub_a, sub_b = subsets
        if len(sub_a) != len(sub_b):
            return None
        if len(set(sub_a)) != len(sub_a) or len(set(sub_b)) != len(sub_b):
            return None
        if any(not 1 <= i <= len(gold) for i in sub_a):
            return None
        if any(not 1 <= j <= len(pred) for j in sub_b):
            return None
        return MatchResult(pairs=tuple(zip(sub_a, sub_b)))

    return _parse_with_reprompt(provider, prompt, params, policy, parse, "topic matching")


def completeness_score(n_matched: int, n_pred: int, n_gold: int) -> tuple[float, float, float]:
    """(precision, recall, F1) percentages over matched topic counts."""
    if n_pred < 1 or n_gold < 1:
        raise EvalError("topic counts must be at least 1")
    if not 0 <= n_matched <= min(n_pred, n_gold):
        raise EvalError(
            f"matched count {n_matched} outside [0, min({n_pred}, {n_gold})]"
        )
    p = 100.0 * n_matched / n_pred
    r = 100.0 * n_matched / n_gold
    f1 = 0.0 if p + r == 0 else 2.0 * p * r / (p + r)
    return p, r, f1


def evaluate_example(
    question: str,
    predicted_insight: str,
    retrieved_tables: Sequence[Table],
    gold_insight: str,
    provider: ChatProvider,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
) -> EvalScores:
    """Run the full scoring pipeline for one example.

    Any stage failure raises :class:`StageError` naming the stage; callers
    must treat the example as failed rather than partially scored.
    """
    if not question.strip() or not predicted_insight.strip() or not gold_insight.strip():
        raise EvalError("question and both insights must be non-empty")
    if not retrieved_tables:
        raise EvalError("need at least one retrieved table")
    kwargs = {"params": params, "policy": policy, "registry": registry}
    schemas = [schema_text(t) for t in retrieved_tables]

    try:
        claims = decompose_claims(schemas, predicted_insight, provider, **kwargs)
    except EvalError as exc:
        raise StageError("decompose_claims", str(exc)) from exc
    try:
        verdicts = [verify_claim(c, retrieved_tables, provider, **kwargs) for c in claims]
    except EvalError as exc:
        raise StageError("verify_claim", str(exc)) from exc
    faith = faithfulness_score(verdicts)

    try:
        gold_topics = decompose_topics(question, gold_insight, provider, **kwargs)
        pred_topics = decompose_topics(question, predicted_insight, provider, **kwargs)
    except EvalError as exc:
        raise StageError("decompose_topics", str(exc)) from exc
    try:
        match = match_topics(gold_topics, pred_topics, provider, **kwargs)
    except EvalError as exc:
        raise StageError("match_topics", str(exc)) from exc
    p, r, f1 = completeness_score(len(match.pairs), len(pred_topics), len(gold_topics))

    return EvalScores(
        faithfulness=faith,
        completeness_p=p,
        completeness_r=r,
        completeness_f1=f1,
        n_claims=len(claims),
        n_verified=sum(1 for v in verdicts if v),
        n_topics_gold=len(gold_topics),
        n_topics_pred=len(pred_topics),
        n_matched=len(match.pairs),
    )
