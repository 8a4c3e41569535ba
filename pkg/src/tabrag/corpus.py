"""Corpus persistence, multi-table set grouping, and dataset statistics.

File formats are line-delimited JSON (UTF-8), one object per line:

* corpus file: ``{id, title, headers, rows, source_kind, foreign_keys?}``
  where ``foreign_keys`` is a list of ``[column, ref_table, ref_column]``
* examples file: ``{id, question_text, question_type, gold_table_set_id,
  gold_insight}``
* sets file: ``{id, table_ids, relation}``
"""

from __future__ import annotations

import json
import logging
import re
import time
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .tables import ForeignKey, Table, validate

log = logging.getLogger(__name__)

QUESTION_TYPES = ("A&S", "C&R", "P&O", "T&P")
RELATIONS = ("joinable", "topic_related")

_INT_TOKEN = re.compile(r"[+-]?[0-9]+")


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class TableSet:
    id: str
    table_ids: tuple[str, ...]
    relation: str

    def __post_init__(self):
        object.__setattr__(self, "table_ids", tuple(self.table_ids))
        if len(self.table_ids) < 2:
            raise ValueError(f"table set {self.id!r} needs at least 2 tables")
        if len(set(self.table_ids)) != len(self.table_ids):
            raise ValueError(f"table set {self.id!r} has duplicate table ids")
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass(frozen=True)
class BenchmarkExample:
    id: str
    question_text: str
    question_type: str
    gold_table_set_id: str
    gold_insight: str

    def __post_init__(self):
        if self.question_type not in QUESTION_TYPES:
            raise ValueError(f"unknown question type {self.question_type!r}")


@dataclass(frozen=True)
class RejectedRecord:
    line_no: int
    reason: str


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: list[RejectedRecord] = field(default_factory=list)


@dataclass(frozen=True)
class Corpus:
    tables: Mapping[str, Table]
    source_path: str = ""
    ingested_at: float = 0.0
    report: IngestReport = field(default_factory=IngestReport)

    def __len__(self) -> int:
        return len(self.tables)

    def sorted_ids(self) -> list[str]:
        return sorted(self.tables)


def _cell_str(value) -> str:
    # ingestion never infers types; scalars in the source file become text
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return str(value)


def _table_from_record(rec: dict) -> Table:
    fks = tuple(
        ForeignKey(str(fk[0]), str(fk[1]), str(fk[2]))
        for fk in rec.get("foreign_keys") or []
    )
    return Table(
        id=str(rec["id"]),
        title=_cell_str(rec.get("title", "")),
        headers=tuple(_cell_str(h) for h in rec["headers"]),
        rows=tuple(tuple(_cell_str(c) for c in row) for row in rec.get("rows", [])),
        source_kind=rec.get("source_kind"),
        foreign_keys=fks,
    )


def table_to_record(table: Table) -> dict:
    rec = {
        "id": table.id,
        "title": table.title,
        "headers": list(table.headers),
        "rows": [list(r) for r in table.rows],
        "source_kind": table.source_kind,
    }
    if table.foreign_keys:
        rec["foreign_keys"] = [
            [fk.column, fk.ref_table, fk.ref_column] for fk in table.foreign_keys
        ]
    return rec


def ingest(path: str | Path) -> Corpus:
    """Load a corpus file; invalid records are rejected into the report,
    duplicate ids abort the ingest."""
    path = Path(path)
    tables: dict[str, Table] = {}
    first_line: dict[str, int] = {}
    report = IngestReport()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                table = _table_from_record(rec)
            except (KeyError, TypeError, ValueError) as exc:
                report.rejected.append(RejectedRecord(line_no, f"unreadable record: {exc}"))
                continue
            if table.id in first_line:
                raise IngestError(
                    f"duplicate table id {table.id!r} at lines "
                    f"{first_line[table.id]} and {line_no}"
                )
            first_line[table.id] = line_no
            violations = validate(table)
            if violations:
                report.rejected.append(RejectedRecord(line_no, "; ".join(violations)))
                continue
            tables[table.id] = table
            report.accepted += 1
    return Corpus(tables=tables, source_path=str(path), ingested_at=time.time(), report=report)


def load_examples(path: str | Path) -> list[BenchmarkExample]:
    examples = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            examples.append(
                BenchmarkExample(
                    id=str(rec["id"]),
                    question_text=rec["question_text"],
                    question_type=rec["question_type"],
                    gold_table_set_id=rec["gold_table_set_id"],
                    gold_insight=rec["gold_insight"],
                )
            )
    return examples


def load_sets(path: str | Path) -> dict[str, TableSet]:
    sets = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ts = TableSet(id=rec["id"], table_ids=rec["table_ids"], relation=rec["relation"])
            sets[ts.id] = ts
    return sets


def save_sets(sets: Iterable[TableSet], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for ts in sets:
            fh.write(
                json.dumps(
                    {"id": ts.id, "table_ids": list(ts.table_ids), "relation": ts.relation},
                    ensure_ascii=False,
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# grouping


def _connected_components(nodes: list[str], adj: Mapping[str, set[str]]) -> list[list[str]]:
    seen: set[str] = set()
    components = []
    for start in sorted(nodes):
        if start in seen:
            continue
        comp = []
        queue = [start]
        seen.add(start)
        while queue:
            node = queue.pop(0)
            comp.append(node)
            for nxt in sorted(adj.get(node, ())):
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        components.append(comp)
    return components


def _split_component(comp: list[str], adj: Mapping[str, set[str]], cap: int) -> list[list[str]]:
    """Split an oversized component into chunks of at most ``cap`` members by
    repeated BFS from the lowest remaining id."""
    remaining = set(comp)
    chunks = []
    while remaining:
        start = min(remaining)
        chunk = []
        queue = [start]
        remaining.discard(start)
        while queue and len(chunk) < cap:
            node = queue.pop(0)
            chunk.append(node)
            for nxt in sorted(adj.get(node, ())):
                if nxt in remaining:
                    remaining.discard(nxt)
                    queue.append(nxt)
        # anything pulled into the queue but not placed goes back
        for node in queue:
            remaining.add(node)
        chunks.append(chunk)
    return chunks


def _components_to_sets(
    components: list[list[str]],
    adj: Mapping[str, set[str]],
    relation: str,
    max_set_size: int | None,
) -> list[TableSet]:
    sets = []
    for comp in components:
        chunks = [comp]
        if max_set_size is not None and len(comp) > max_set_size:
            chunks = _split_component(comp, adj, max_set_size)
        for chunk in chunks:
            if len(chunk) < 2:
                continue
            sets.append(
                TableSet(
                    id=f"{relation}:{min(chunk)}",
                    table_ids=tuple(sorted(chunk)),
                    relation=relation,
                )
            )
    return sets


def group_joinable(corpus: Corpus, max_set_size: int | None = 5) -> list[TableSet]:
    """Group tables into sets along declared foreign-key links.

    Sets are connected components of the undirected key graph; components
    larger than ``max_set_size`` are split by BFS from the lowest id.
    """
    adj: dict[str, set[str]] = defaultdict(set)
    for tid in corpus.sorted_ids():
        for fk in corpus.tables[tid].foreign_keys:
            if fk.ref_table not in corpus.tables:
                log.warning(
                    "dropping foreign key %s.%s -> missing table %s",
                    tid, fk.column, fk.ref_table,
                )
                continue
            if fk.ref_table != tid:
                adj[tid].add(fk.ref_table)
                adj[fk.ref_table].add(tid)
    nodes = [t for t in corpus.sorted_ids() if adj.get(t)]
    components = _connected_components(nodes, adj)
    return _components_to_sets(components, adj, "joinable", max_set_size)


def split_title(title: str) -> tuple[str, str, str]:
    """Split a wiki title into (page, section, caption); titles without
    exactly three ' - ' fields fall back to (title, '', '')."""
    parts = title.split(" - ")
    if len(parts) == 3:
        return (parts[0], parts[1], parts[2])
    return (title, "", "")


def strip_numeric_tokens(text: str) -> str:
    kept = [tok for tok in text.split() if not _INT_TOKEN.fullmatch(tok)]
    return " ".join(kept)


def topic_link(a: Table, b: Table) -> bool:
    """Two wiki tables are topic-linked when at least two of their three
    title fields match exactly after dropping integer tokens, and their
    header sets differ by at most one name on each side."""
    fa = [strip_numeric_tokens(f) for f in split_title(a.title)]
    fb = [strip_numeric_tokens(f) for f in split_title(b.title)]
    matches = sum(1 for x, y in zip(fa, fb) if x == y)
    if matches < 2:
        return False
    return len(set(a.headers) ^ set(b.headers)) <= 2


def group_topic_related(corpus: Corpus, max_set_size: int | None = 5) -> list[TableSet]:
    """Group wiki-sourced tables whose titles and headers indicate a shared topic."""
    ids = [t for t in corpus.sorted_ids() if corpus.tables[t].source_kind == "wiki"]
    adj: dict[str, set[str]] = defaultdict(set)
    for i, ta in enumerate(ids):
        for tb in ids[i + 1:]:
            if topic_link(corpus.tables[ta], corpus.tables[tb]):
                adj[ta].add(tb)
                adj[tb].add(ta)
    nodes = [t for t in ids if adj.get(t)]
    components = _connected_components(nodes, adj)
    return _components_to_sets(components, adj, "topic_related", max_set_size)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class CorpusStats:
    n_examples: int
    n_unique_tables: int
    n_unique_sets: int
    mean_words_per_insight: float
    mean_tables_per_example: float
    mean_rows_per_table: float
    mean_cols_per_table: float
    qtype_histogram: dict[str, int]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, ensure_ascii=False)


def corpus_stats(
    corpus: Corpus,
    examples: list[BenchmarkExample],
    sets: Mapping[str, TableSet] | None = None,
) -> CorpusStats:
    """Aggregate dataset statistics; ``sets`` resolves each example's gold set."""
    sets = sets or {}
    hist = Counter(ex.question_type for ex in examples)
    n = len(examples)
    if n:
        missing = [ex.gold_table_set_id for ex in examples if ex.gold_table_set_id not in sets]
        if missing:
            raise KeyError(f"examples reference unknown table sets: {sorted(set(missing))[:5]}")
        mean_words = sum(len(ex.gold_insight.split()) for ex in examples) / n
        mean_tables = sum(len(sets[ex.gold_table_set_id].table_ids) for ex in examples) / n
    else:
        mean_words = 0.0
        mean_tables = 0.0
    n_tables = len(corpus.tables)
    if n_tables:
        mean_rows = sum(t.n_rows for t in corpus.tables.values()) / n_tables
        mean_cols = sum(t.n_cols for t in corpus.tables.values()) / n_tables
    else:
        mean_rows = 0.0
        mean_cols = 0.0
    return CorpusStats(
        n_examples=n,
        n_unique_tables=n_tables,
        n_unique_sets=len(sets),
        mean_words_per_insight=mean_words,
        mean_tables_per_example=mean_tables,
        mean_rows_per_table=mean_rows,
        mean_cols_per_table=mean_cols,
        qtype_histogram={k: hist[k] for k in sorted(hist)},
    )
