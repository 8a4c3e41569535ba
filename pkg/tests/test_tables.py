import random

import pytest

from tabrag.tables import (
    ForeignKey,
    Table,
    TableFormatError,
    parse_serialized,
    schema_text,
    serialize_table,
    validate,
)

from conftest import CAR_MAKERS_SERIALIZED, random_table


def test_serialize_golden_string(car_makers):
    assert serialize_table(car_makers) == CAR_MAKERS_SERIALIZED


def test_serialize_zero_rows():
    t = Table(id="x", title="t", headers=("a", "b"), rows=())
    assert serialize_table(t) == "[TITLE] t [HEADER] a | b"


def test_serialize_row_limit(car_makers):
    s = serialize_table(car_makers, row_limit=1)
    assert s.endswith("[ROW 1] 1 | amc | American Motor Company | 1")
    assert "[ROW 2]" not in s
    assert serialize_table(car_makers, row_limit=99) == serialize_table(car_makers)


def test_serialize_deterministic(car_makers):
    assert serialize_table(car_makers) == serialize_table(car_makers)


def test_serialize_rejects_ragged():
    t = Table(id="x", title="t", headers=("a", "b", "c", "d"), rows=(("1", "2", "3"),))
    with pytest.raises(TableFormatError, match="row 1 has 3 cells"):
        serialize_table(t)


def test_parse_simple():
    t = parse_serialized("[TITLE] t [HEADER] a | b [ROW 1] x | y")
    assert t.title == "t"
    assert t.headers == ("a", "b")
    assert t.rows == (("x", "y"),)


def test_parse_recovers_four_column_header():
    t = parse_serialized(CAR_MAKERS_SERIALIZED)
    assert t.headers == ("Id", "Maker", "FullName", "Country")
    assert len(t.rows) == 3


def test_parse_errors_carry_offset():
    with pytest.raises(TableFormatError, match="offset 0"):
        parse_serialized("no title here")
    with pytest.raises(TableFormatError, match="HEADER"):
        parse_serialized("[TITLE] t only")
    err = None
    try:
        parse_serialized("[TITLE] t [HEADER] a [ROW 1] x [ROW 3] y")
    except TableFormatError as e:
        err = e
    assert err is not None and "non-contiguous" in str(err) and err.offset is not None
    with pytest.raises(TableFormatError, match="row 1 has 1 cells, expected 2"):
        parse_serialized("[TITLE] t [HEADER] a | b [ROW 1] x")


def test_cells_with_spaces_round_trip():
    t = Table(
        id="x",
        title="two words",
        headers=("first col", "second col"),
        rows=(("a b", "c d"), ("e  f", " g ")),
    )
    back = parse_serialized(serialize_table(t))
    assert (back.title, back.headers, back.rows) == (t.title, t.headers, t.rows)


def test_pipe_cells_escape_and_round_trip():
    t = Table(id="x", title="a | b", headers=("h|1", "h2"), rows=(("1 | 2", "3"),))
    s = serialize_table(t)
    # exactly the structural separators remain as ASCII bars
    assert s.count(" | ") == 2
    back = parse_serialized(s)
    assert (back.title, back.headers, back.rows) == (t.title, t.headers, t.rows)


def test_round_trip_random_tables():
    rng = random.Random(20240317)
    for i in range(1000):
        t = random_table(rng, f"t{i}")
        back = parse_serialized(serialize_table(t))
        assert (back.title, back.headers, back.rows) == (t.title, t.headers, t.rows)


def test_schema_text(car_makers):
    st = schema_text(car_makers)
    assert st.text == "[TITLE] car_1 - car_makers [HEADER] Id | Maker | FullName | Country"


def test_schema_text_zero_rows_equals_serialization():
    t = Table(id="x", title="t", headers=("a", "b"), rows=())
    assert schema_text(t).text == serialize_table(t)


def test_schema_text_prefix_property():
    rng = random.Random(7)
    for i in range(200):
        t = random_table(rng, f"t{i}")
        full = serialize_table(t)
        prefix = schema_text(t).text
        assert full.startswith(prefix)
        if t.rows:
            assert len(prefix) < len(full)


def test_validate_ok(car_makers):
    assert validate(car_makers) == []


def test_validate_ragged_row_names_index():
    t = Table(id="x", title="t", headers=("a", "b", "c", "d"), rows=(("1", "2", "3"),))
    assert any("row 1" in v for v in validate(t))


def test_validate_foreign_key_names_column():
    t = Table(
        id="x",
        title="t",
        headers=("a",),
        rows=(),
        foreign_keys=(ForeignKey("missing", "other", "a"),),
    )
    assert any("missing" in v for v in validate(t))


def test_validate_empty_id_and_headers():
    violations = validate(Table(id="", title="t", headers=(), rows=()))
    assert any("id" in v for v in violations)
    assert any("headers" in v for v in violations)
