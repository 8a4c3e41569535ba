"""Table data model and the flat text serialization used everywhere else.

A table is linearized as::

    [TITLE] title [HEADER] col1 | col2 [ROW 1] a | b [ROW 2] c | d

Cells, headers, and titles containing a literal ``|`` are written with the
fullwidth bar U+FF5C instead, so the format stays parseable; the bar is
restored on parse.  Cells containing the segment tokens themselves are not
representable (the format is not self-delimiting).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

SOURCE_KINDS = ("relational_db", "wiki")

_ESCAPED_BAR = "｜"
_ROW_TOKEN = re.compile(r" \[ROW (\d+)\] ")


class TableFormatError(ValueError):
    """Raised for invalid tables at serialization or malformed serialized text.

    ``offset`` is the byte offset in the input where parsing failed (parse
    errors only).
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class Table:
    """Immutable titled grid of string cells.

    ``id`` and ``source_kind`` may be left unset on tables recovered from
    serialized text; ``validate`` reports that, construction does not.
    """

    id: str
    title: str
    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    source_kind: str | None = None
    foreign_keys: tuple[ForeignKey, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "headers", tuple(self.headers))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        object.__setattr__(self, "foreign_keys", tuple(self.foreign_keys))

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.headers)


def validate(table: Table) -> list[str]:
    """Return a list of invariant violations, empty when the table is well formed."""
    violations = []
    if not table.id:
        violations.append("id must be non-empty")
    if not table.headers:
        violations.append("headers must be non-empty")
    if table.source_kind is not None and table.source_kind not in SOURCE_KINDS:
        violations.append(f"source_kind {table.source_kind!r} not one of {SOURCE_KINDS}")
    for i, row in enumerate(table.rows):
        if len(row) != len(table.headers):
            violations.append(
                f"row {i + 1} has {len(row)} cells, expected {len(table.headers)}"
            )
        for cell in row:
            if not isinstance(cell, str):
                violations.append(f"row {i + 1} contains non-string cell {cell!r}")
                break
    for fk in table.foreign_keys:
        if fk.column not in table.headers:
            violations.append(f"foreign key column {fk.column!r} not in headers")
    return violations


def _structural_violations(table: Table) -> list[str]:
    # Only the invariants that affect the serialized surface; id and
    # source_kind do not appear in the output and may be unset.
    return [
        v
        for v in validate(table)
        if not v.startswith("id ") and not v.startswith("source_kind")
    ]


def _escape(text: str) -> str:
    return text.replace("|", _ESCAPED_BAR)


def _unescape(text: str) -> str:
    return text.replace(_ESCAPED_BAR, "|")


def serialize_table(table: Table, row_limit: int | None = None) -> str:
    """Linearize a table; ``row_limit`` keeps only the first N rows."""
    if row_limit is not None and row_limit < 0:
        raise ValueError("row_limit must be non-negative")
    violations = _structural_violations(table)
    if violations:
        raise TableFormatError("invalid table: " + "; ".join(violations))
    parts = [
        f"[TITLE] {_escape(table.title)}",
        "[HEADER] " + " | ".join(_escape(h) for h in table.headers),
    ]
    rows = table.rows if row_limit is None else table.rows[:row_limit]
    for i, row in enumerate(rows, start=1):
        parts.append(f"[ROW {i}] " + " | ".join(_escape(c) for c in row))
    return " ".join(parts)


@dataclass(frozen=True)
class SchemaText:
    """The title + header prefix of a serialization, without any row segment."""

    text: str

    def __post_init__(self):
        if not self.text.startswith("[TITLE] "):
            raise TableFormatError("schema text must begin with '[TITLE] '")
        if self.text.count("[HEADER] ") != 1:
            raise TableFormatError("schema text must contain exactly one '[HEADER] '")
        if "[ROW" in self.text:
            raise TableFormatError("schema text must not contain a row segment")


def schema_text(table: Table) -> SchemaText:
    return SchemaText(serialize_table(table, row_limit=0))


def parse_serialized(s: str) -> Table:
    """Inverse of :func:`serialize_table`.

    The returned table has id unset, no source kind, and no foreign keys;
    only title, headers, and rows are recovered.
    """
    if not s.startswith("[TITLE] "):
        raise TableFormatError("expected leading '[TITLE] '", offset=0)
    header_pos = s.find(" [HEADER] ")
    if header_pos < 0:
        raise TableFormatError("missing ' [HEADER] ' segment", offset=len(s))
    title = _unescape(s[len("[TITLE] "):header_pos])
    body = s[header_pos + len(" [HEADER] "):]
    body_offset = header_pos + len(" [HEADER] ")

    row_matches = list(_ROW_TOKEN.finditer(body))
    header_end = row_matches[0].start() if row_matches else len(body)
    headers = tuple(_unescape(h) for h in body[:header_end].split(" | "))

    rows = []
    for i, m in enumerate(row_matches):
        label = int(m.group(1))
        if label != i + 1:
            raise TableFormatError(
                f"non-contiguous row index {label}, expected {i + 1}",
                offset=body_offset + m.start(),
            )
        end = row_matches[i + 1].start() if i + 1 < len(row_matches) else len(body)
        cells = tuple(_unescape(c) for c in body[m.end():end].split(" | "))
        if len(cells) != len(headers):
            raise TableFormatError(
                f"row {label} has {len(cells)} cells, expected {len(headers)}",
                offset=body_offset + m.start(),
            )
        rows.append(cells)

    return Table(id="", title=title, headers=headers, rows=tuple(rows))
