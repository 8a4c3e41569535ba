"""Toolkit for multi-table retrieval, insight generation, and insight evaluation."""

__version__ = "0.1.0"

from .tables import Table, ForeignKey, SchemaText, serialize_table, parse_serialized, schema_text, validate

__all__ = [
    "Table",
    "ForeignKey",
    "SchemaText",
    "serialize_table",
    "parse_serialized",
    "schema_text",
    "validate",
]
