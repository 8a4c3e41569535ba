"""Insight generation: assemble retrieved-table context and prompt a provider."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

from .gateway import CachedChatProvider, ChatProvider, CompletionParams, RetryPolicy, complete_with_retry
from .prompts import TemplateRegistry, DEFAULT_REGISTRY
from .tables import Table, schema_text, serialize_table

log = logging.getLogger(__name__)

DEFAULT_CHAR_BUDGET = 48_000


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AssembledContext:
    text: str
    table_ids: tuple[str, ...]
    row_limit: int | None        # None when no truncation was needed
    dropped_table_ids: tuple[str, ...]


@dataclass(frozen=True)
class InsightRecord:
    question_id: str
    insight_text: str
    context_table_ids: tuple[str, ...]
    provider: str
    timestamp: str

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "insight_text": self.insight_text,
            "context_table_ids": list(self.context_table_ids),
            "provider": self.provider,
            "timestamp": self.timestamp,
        }


def _render_tables(tables: Sequence[Table], row_limit: int | None) -> str:
    return "\n".join(serialize_table(t, row_limit=row_limit) for t in tables)


def assemble_context(tables: Sequence[Table], char_budget: int = DEFAULT_CHAR_BUDGET) -> AssembledContext:
    """Serialize tables in rank order within a character budget.

    Over budget, rows are truncated uniformly down to one row per table
    before any whole table is dropped from the tail.
    """
    if char_budget < 1:
        raise GenerationError("char_budget must be positive")
    if not tables:
        raise GenerationError("need at least one table")

    full = _render_tables(tables, None)
    if len(full) <= char_budget:
        return AssembledContext(full, tuple(t.id for t in tables), None, ())

    max_rows = max(t.n_rows for t in tables)
    row_limit = max_rows
    while row_limit > 1:
        row_limit -= 1
        text = _render_tables(tables, row_limit)
        if len(text) <= char_budget:
            return AssembledContext(text, tuple(t.id for t in tables), row_limit, ())

    kept = list(tables)
    dropped = []
    while kept:
        text = _render_tables(kept, 1)
        if len(text) <= char_budget:
            return AssembledContext(
                text, tuple(t.id for t in kept), 1, tuple(t.id for t in dropped)
            )
        dropped.insert(0, kept.pop())

    first = tables[0]
    raise GenerationError(
        f"char budget {char_budget} cannot fit even the first table "
        f"({first.id!r}, schema length {len(schema_text(first).text)})"
    )


def generate_insight(
    question: str,
    tables: Sequence[Table],
    provider: ChatProvider,
    char_budget: int = DEFAULT_CHAR_BUDGET,
    question_id: str | None = None,
    params: CompletionParams | None = None,
    policy: RetryPolicy | None = None,
    registry: TemplateRegistry | None = None,
    clock: Callable[[], str] | None = None,
) -> InsightRecord:
    """Produce an insight for a question grounded on the given tables
    (ordered by retrieval rank)."""
    if not tables:
        raise GenerationError("need at least one table")
    registry = registry or DEFAULT_REGISTRY
    context = assemble_context(tables, char_budget)
    prompt = registry.render(
        "insight_generation",
        {"question": question, "serialized_tables": context.text},
    )
    params = params or CompletionParams()
    if isinstance(provider, CachedChatProvider):
        entry = provider.complete_entry(prompt, params)
        text, created = entry.text, entry.created_at
    else:
        text = complete_with_retry(provider, prompt, params, policy)
        from .gateway import _utc_now

        created = clock() if clock is not None else _utc_now()
    text = text.strip()
    if not text:
        raise GenerationError("degenerate generation: provider returned empty output")
    record = InsightRecord(
        question_id=question_id if question_id is not None else question,
        insight_text=text,
        context_table_ids=context.table_ids,
        provider=provider.name,
        timestamp=created,
    )
    log.debug("generated %d-word insight for %s", len(text.split()), record.question_id)
    return record
