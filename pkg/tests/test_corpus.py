import json
import random

import pytest

from tabrag.corpus import (
    BenchmarkExample,
    Corpus,
    IngestError,
    TableSet,
    corpus_stats,
    group_joinable,
    group_topic_related,
    ingest,
    load_examples,
    load_sets,
    save_sets,
    split_title,
    strip_numeric_tokens,
)
from tabrag.tables import ForeignKey, Table


def write_corpus_file(tmp_path, records, name="corpus.jsonl"):
    path = tmp_path / name
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


def rec(tid, headers=("a", "b"), rows=(("1", "2"),), title=None, kind="wiki", fks=None):
    r = {
        "id": tid,
        "title": title if title is not None else f"title {tid}",
        "headers": list(headers),
        "rows": [list(x) for x in rows],
        "source_kind": kind,
    }
    if fks:
        r["foreign_keys"] = fks
    return r


def test_ingest_three_records(tmp_path):
    path = write_corpus_file(tmp_path, [rec("a"), rec("b"), rec("c")])
    corpus = ingest(path)
    assert len(corpus) == 3
    assert corpus.report.accepted == 3 and not corpus.report.rejected


def test_ingest_duplicate_id_fatal(tmp_path):
    path = write_corpus_file(tmp_path, [rec("a"), rec("b"), rec("a")])
    with pytest.raises(IngestError, match=r"'a'.*lines 1 and 3"):
        ingest(path)


def test_ingest_rejects_ragged_record(tmp_path):
    bad = rec("bad", rows=(("only-one",),))
    path = write_corpus_file(tmp_path, [rec("a"), bad])
    corpus = ingest(path)
    assert len(corpus) == 1
    assert len(corpus.report.rejected) == 1
    assert corpus.report.rejected[0].line_no == 2


def test_ingest_numeric_cells_become_text(tmp_path):
    r = rec("a")
    r["rows"] = [[1, 2.5]]
    path = write_corpus_file(tmp_path, [r])
    corpus = ingest(path)
    assert corpus.tables["a"].rows == (("1", "2.5"),)


def test_reingest_idempotent_stats(tmp_path):
    path = write_corpus_file(tmp_path, [rec("a"), rec("b")])
    s1 = corpus_stats(ingest(path), []).to_json()
    s2 = corpus_stats(ingest(path), []).to_json()
    assert s1 == s2


# ---------------------------------------------------------------------------
# joinable grouping


def table(tid, kind="relational_db", title=None, headers=("a", "b"), fks=()):
    return Table(
        id=tid,
        title=title if title is not None else f"t {tid}",
        headers=headers,
        rows=(),
        source_kind=kind,
        foreign_keys=tuple(ForeignKey(*fk) for fk in fks),
    )


def corpus_of(*tables):
    return Corpus(tables={t.id: t for t in tables})


def test_group_joinable_chain():
    corpus = corpus_of(
        table("A", fks=[("a", "B", "a")]),
        table("B", fks=[("a", "C", "a")]),
        table("C"),
    )
    sets = group_joinable(corpus)
    assert len(sets) == 1
    assert sets[0].table_ids == ("A", "B", "C")
    assert sets[0].relation == "joinable"


def test_group_joinable_no_keys():
    assert group_joinable(corpus_of(table("A"), table("B"))) == []


def test_group_joinable_drops_dangling_key(caplog):
    corpus = corpus_of(table("A", fks=[("a", "GONE", "a")]), table("B"))
    with caplog.at_level("WARNING"):
        assert group_joinable(corpus) == []
    assert any("GONE" in r.message for r in caplog.records)


class UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def test_group_joinable_matches_union_find_oracle():
    rng = random.Random(99)
    ids = [f"t{i:02d}" for i in range(50)]
    edges = set()
    for _ in range(40):
        a, b = rng.sample(ids, 2)
        edges.add((a, b))
    tables = {}
    for tid in ids:
        fks = [("a", b, "a") for (x, b) in edges if x == tid]
        tables[tid] = table(tid, fks=fks)
    corpus = Corpus(tables=tables)

    uf = UnionFind(ids)
    for a, b in edges:
        uf.union(a, b)
    oracle = {}
    for tid in ids:
        oracle.setdefault(uf.find(tid), set()).add(tid)
    oracle_components = {frozenset(c) for c in oracle.values() if len(c) >= 2}

    got = {frozenset(s.table_ids) for s in group_joinable(corpus, max_set_size=None)}
    assert got == oracle_components


def test_group_joinable_capping():
    # star of 7 tables around a hub, cap 3
    fks = [("a", f"S{i}", "a") for i in range(6)]
    tables = [table("HUB", fks=fks)] + [table(f"S{i}") for i in range(6)]
    sets = group_joinable(corpus_of(*tables), max_set_size=3)
    assert all(2 <= len(s.table_ids) <= 3 for s in sets)
    covered = [tid for s in sets for tid in s.table_ids]
    assert len(covered) == len(set(covered))  # no table in two sets


# ---------------------------------------------------------------------------
# topic grouping


def test_strip_numeric_tokens():
    assert strip_numeric_tokens("2004 Broadway revival") == "Broadway revival"
    assert strip_numeric_tokens("2004-05 season") == "2004-05 season"


def test_split_title_padding():
    assert split_title("a - b - c") == ("a", "b", "c")
    assert split_title("just a page") == ("just a page", "", "")
    assert split_title("a - b") == ("a - b", "", "")


def test_topic_link_numeric_exclusion():
    a = table(
        "w1", kind="wiki",
        title="X - 2004 Broadway revival - 2004 Broadway revival",
        headers=("Year", "Award"),
    )
    b = table(
        "w2", kind="wiki",
        title="X - 2010 Broadway revival - 2010 Broadway revival",
        headers=("Year", "Award"),
    )
    sets = group_topic_related(corpus_of(a, b))
    assert len(sets) == 1 and sets[0].table_ids == ("w1", "w2")
    assert sets[0].relation == "topic_related"


def test_topic_link_header_boundary():
    # identical titles but two header names differ on each side: not linked
    a = table("w1", kind="wiki", title="P - S - C", headers=("a", "b", "c", "d"))
    b = table("w2", kind="wiki", title="P - S - C", headers=("a", "b", "e", "f"))
    assert group_topic_related(corpus_of(a, b)) == []
    # one name differing on each side: linked
    c = table("w3", kind="wiki", title="P - S - C", headers=("a", "b", "c", "e"))
    sets = group_topic_related(corpus_of(a, c))
    assert len(sets) == 1


def test_topic_grouping_ignores_non_wiki():
    a = table("w1", kind="relational_db", title="P - S - C")
    b = table("w2", kind="relational_db", title="P - S - C")
    assert group_topic_related(corpus_of(a, b)) == []


def _oracle_topic_partition(tables):
    """Brute-force re-derivation of the pairwise rule + union-find."""

    def fields(title):
        parts = title.split(" - ")
        if len(parts) != 3:
            parts = [title, "", ""]
        out = []
        for p in parts:
            toks = [t for t in p.split() if not _is_int(t)]
            out.append(" ".join(toks))
        return out

    def _is_int(tok):
        if tok and tok[0] in "+-":
            tok = tok[1:]
        return tok.isdigit() and tok.isascii()

    def linked(a, b):
        same = sum(1 for x, y in zip(fields(a.title), fields(b.title)) if x == y)
        return same >= 2 and len(set(a.headers) ^ set(b.headers)) <= 2

    uf = UnionFind([t.id for t in tables])
    for i, a in enumerate(tables):
        for b in tables[i + 1:]:
            if linked(a, b):
                uf.union(a.id, b.id)
    groups = {}
    for t in tables:
        groups.setdefault(uf.find(t.id), set()).add(t.id)
    return {frozenset(g) for g in groups.values() if len(g) >= 2}


def test_topic_grouping_matches_pairwise_oracle():
    rng = random.Random(4242)
    pages = ["Alpha Show", "Beta Team", "Gamma City"]
    sections = ["1999 season", "2004 revival", "2010 revival", "Awards"]
    header_pool = ["Year", "Award", "Category", "Nominee", "Result", "Notes"]
    tables = []
    for i in range(30):
        headers = tuple(sorted(rng.sample(header_pool, rng.randint(2, 5))))
        sec = rng.choice(sections)
        title = f"{rng.choice(pages)} - {sec} - {sec if rng.random() < 0.7 else rng.choice(sections)}"
        tables.append(table(f"w{i:02d}", kind="wiki", title=title, headers=headers))
    corpus = Corpus(tables={t.id: t for t in tables})
    got = {frozenset(s.table_ids) for s in group_topic_related(corpus, max_set_size=None)}
    assert got == _oracle_topic_partition(tables)


def test_topic_grouping_deterministic():
    a = table("w1", kind="wiki", title="P - S - C")
    b = table("w2", kind="wiki", title="P - S - C")
    c = table("w3", kind="wiki", title="P - S - C")
    corpus = corpus_of(a, b, c)
    first = [s.table_ids for s in group_topic_related(corpus)]
    second = [s.table_ids for s in group_topic_related(corpus)]
    assert first == second


# ---------------------------------------------------------------------------
# stats


def test_corpus_stats_empty():
    stats = corpus_stats(Corpus(tables={}), [])
    assert stats.n_examples == 0
    assert stats.qtype_histogram == {}
    assert stats.mean_words_per_insight == 0.0
    assert stats.mean_rows_per_table == 0.0


def test_corpus_stats_hand_fixture():
    t1 = table("a", headers=("x", "y", "z"))
    t2 = table("b", headers=("x",))
    t1 = Table(id="a", title="t", headers=("x", "y", "z"), rows=(("1", "2", "3"), ("4", "5", "6")))
    t2 = Table(id="b", title="t", headers=("x",), rows=(("1",),))
    corpus = corpus_of(t1, t2)
    sets = {
        "s1": TableSet(id="s1", table_ids=("a", "b"), relation="joinable"),
    }
    examples = [
        BenchmarkExample("q1", "why?", "A&S", "s1", "three word insight"),
        BenchmarkExample("q2", "how?", "P&O", "s1", "a five word long insight"),
    ]
    stats = corpus_stats(corpus, examples, sets)
    assert stats.n_examples == 2
    assert stats.n_unique_tables == 2
    assert stats.n_unique_sets == 1
    assert stats.mean_words_per_insight == pytest.approx(4.0)  # (3 + 5) / 2
    assert stats.mean_tables_per_example == pytest.approx(2.0)
    assert stats.mean_rows_per_table == pytest.approx(1.5)  # (2 + 1) / 2
    assert stats.mean_cols_per_table == pytest.approx(2.0)  # (3 + 1) / 2
    assert stats.qtype_histogram == {"A&S": 1, "P&O": 1}
    assert sum(stats.qtype_histogram.values()) == stats.n_examples


def test_corpus_stats_unknown_set():
    examples = [BenchmarkExample("q1", "?", "A&S", "nope", "i")]
    with pytest.raises(KeyError):
        corpus_stats(Corpus(tables={}), examples, {})


def test_examples_and_sets_round_trip(tmp_path):
    sets = [TableSet(id="s1", table_ids=("a", "b"), relation="topic_related")]
    save_sets(sets, tmp_path / "sets.jsonl")
    assert load_sets(tmp_path / "sets.jsonl")["s1"].table_ids == ("a", "b")

    path = tmp_path / "ex.jsonl"
    path.write_text(
        json.dumps(
            {
                "id": "q1",
                "question_text": "?",
                "question_type": "T&P",
                "gold_table_set_id": "s1",
                "gold_insight": "x",
            }
        )
        + "\n",
        encoding="utf-8",
    )
    assert load_examples(path)[0].question_type == "T&P"


def test_ingest_order_independent(tmp_path):
    records = [rec("a"), rec("b"), rec("c")]
    p1 = write_corpus_file(tmp_path, records, "fwd.jsonl")
    p2 = write_corpus_file(tmp_path, list(reversed(records)), "rev.jsonl")
    s1 = corpus_stats(ingest(p1), []).to_json()
    s2 = corpus_stats(ingest(p2), []).to_json()
    assert s1 == s2
    assert ingest(p1).sorted_ids() == ingest(p2).sorted_ids()
