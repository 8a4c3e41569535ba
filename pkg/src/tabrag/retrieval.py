"""Sparse (BM25) and dense indexing over serialized tables, top-k retrieval,
and retrieval metrics."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from random import Random
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .corpus import Corpus
from .tables import Table, serialize_table

log = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1

_TOKEN = re.compile(r"[a-z0-9]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


class RetrievalError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on non-alphanumeric runs."""
    return _TOKEN.findall(text.lower())


@dataclass
class SparseIndex:
    kind = "sparse_bm25"
    ids: list[str]
    vocab: dict[str, int]
    idf: np.ndarray          # (n_terms,)
    post_ptr: np.ndarray     # (n_terms + 1,)
    post_doc: np.ndarray     # (n_postings,) doc positions into ids
    post_tf: np.ndarray      # (n_postings,)
    doc_len: np.ndarray      # (n_docs,) float64
    avgdl: float
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B


@dataclass
class DenseIndex:
    kind = "dense"
    ids: list[str]
    matrix: np.ndarray       # (n_docs, dim), unit rows
    dimension: int


@dataclass(frozen=True)
class RetrievalResult:
    query_id: str
    ranked: tuple[tuple[str, float], ...]

    def table_ids(self) -> list[str]:
        return [tid for tid, _ in self.ranked]


def build_index(corpus: Corpus, kind: str, embedder=None):
    """Index every table's full serialization; ``kind`` is 'sparse' or 'dense'."""
    ids = corpus.sorted_ids()
    docs = [serialize_table(corpus.tables[tid]) for tid in ids]
    if kind in ("sparse", "sparse_bm25"):
        return _build_sparse(ids, docs)
    if kind == "dense":
        if embedder is None:
            raise RetrievalError("dense indexing requires an embedding provider")
        return _build_dense(ids, docs, embedder)
    raise RetrievalError(f"unknown index kind {kind!r}")


def _build_sparse(ids: list[str], docs: list[str]) -> SparseIndex:
    vocab: dict[str, int] = {}
    term_docs: list[dict[int, int]] = []  # term id -> {doc pos: tf}
    doc_len = np.zeros(len(docs), dtype=np.float64)
    for pos, doc in enumerate(docs):
        tokens = tokenize(doc)
        doc_len[pos] = len(tokens)
        for tok in tokens:
            tid = vocab.get(tok)
            if tid is None:
                tid = len(vocab)
                vocab[tok] = tid
                term_docs.append({})
            term_docs[tid][pos] = term_docs[tid].get(pos, 0) + 1

    n_terms = len(vocab)
    n_docs = len(docs)
    post_ptr = np.zeros(n_terms + 1, dtype=np.int64)
    for tid in range(n_terms):
        post_ptr[tid + 1] = post_ptr[tid] + len(term_docs[tid])
    post_doc = np.zeros(post_ptr[-1], dtype=np.int64)
    post_tf = np.zeros(post_ptr[-1], dtype=np.float64)
    df = np.zeros(n_terms, dtype=np.float64)
    for tid in range(n_terms):
        entries = sorted(term_docs[tid].items())
        df[tid] = len(entries)
        base = post_ptr[tid]
        for j, (pos, tf) in enumerate(entries):
            post_doc[base + j] = pos
            post_tf[base + j] = tf
    # non-negative IDF variant so zero-overlap documents never outrank matches
    idf = np.log(1.0 + (n_docs - df + 0.5) / (df + 0.5)) if n_terms else np.zeros(0)
    avgdl = float(doc_len.mean()) if n_docs else 0.0
    return SparseIndex(
        ids=ids, vocab=vocab, idf=idf, post_ptr=post_ptr, post_doc=post_doc,
        post_tf=post_tf, doc_len=doc_len, avgdl=avgdl,
    )


def _build_dense(ids: list[str], docs: list[str], embedder) -> DenseIndex:
    vectors = []
    for tid, doc in zip(ids, docs):
        try:
            vec = embedder.embed([doc])[0]
        except Exception as exc:
            raise RetrievalError(f"embedding failed for table {tid!r}: {exc}") from exc
        vectors.append(vec)
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != embedder.dimension:
        raise RetrievalError("embedder returned vectors of the wrong dimension")
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    matrix = matrix / norms
    return DenseIndex(ids=ids, matrix=matrix, dimension=embedder.dimension)


def _rank_all(scores: np.ndarray) -> np.ndarray:
    # descending score, ascending doc position on ties (ids are sorted)
    return np.lexsort((np.arange(scores.size), -scores))


def retrieve(index, query: str, k: int, query_id: str | None = None, embedder=None) -> RetrievalResult:
    """Top-k tables for a query; ties break by ascending table id."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    qid = query_id if query_id is not None else query
    if isinstance(index, SparseIndex):
        tids = [index.vocab[t] for t in tokenize(query) if t in index.vocab]
        if not tids:
            return RetrievalResult(query_id=qid, ranked=())
        scores = kernels.bm25_scores(
            np.asarray(tids, dtype=np.int64),
            index.idf, index.post_ptr, index.post_doc, index.post_tf,
            index.doc_len, index.avgdl, index.k1, index.b,
        )
    elif isinstance(index, DenseIndex):
        if embedder is None:
            raise RetrievalError("dense retrieval requires the embedding provider")
        vec = np.asarray(embedder.embed([query])[0], dtype=np.float64)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec = vec / norm
        scores = index.matrix @ vec
    else:
        raise RetrievalError(f"unknown index type {type(index).__name__}")
    order = _rank_all(scores)[:k]
    ranked = tuple((index.ids[i], float(scores[i])) for i in order)
    return RetrievalResult(query_id=qid, ranked=ranked)


# ---------------------------------------------------------------------------
# persistence


def save_index(index, path: str | Path) -> None:
    if isinstance(index, SparseIndex):
        payload = {
            "format_version": INDEX_FORMAT_VERSION,
            "kind": "sparse_bm25",
            "ids": index.ids,
            "vocab": index.vocab,
            "idf": index.idf.tolist(),
            "post_ptr": index.post_ptr.tolist(),
            "post_doc": index.post_doc.tolist(),
            "post_tf": index.post_tf.tolist(),
            "doc_len": index.doc_len.tolist(),
            "avgdl": index.avgdl,
            "k1": index.k1,
            "b": index.b,
        }
    elif isinstance(index, DenseIndex):
        payload = {
            "format_version": INDEX_FORMAT_VERSION,
            "kind": "dense",
            "ids": index.ids,
            "matrix": index.matrix.tolist(),
            "dimension": index.dimension,
        }
    else:
        raise RetrievalError(f"cannot persist {type(index).__name__}")
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_index(path: str | Path):
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != INDEX_FORMAT_VERSION:
        raise RetrievalError(f"unsupported index format version {version!r}")
    if payload["kind"] == "sparse_bm25":
        return SparseIndex(
            ids=payload["ids"],
            vocab=payload["vocab"],
            idf=np.asarray(payload["idf"], dtype=np.float64),
            post_ptr=np.asarray(payload["post_ptr"], dtype=np.int64),
            post_doc=np.asarray(payload["post_doc"], dtype=np.int64),
            post_tf=np.asarray(payload["post_tf"], dtype=np.float64),
            doc_len=np.asarray(payload["doc_len"], dtype=np.float64),
            avgdl=payload["avgdl"],
            k1=payload["k1"],
            b=payload["b"],
        )
    if payload["kind"] == "dense":
        matrix = np.asarray(payload["matrix"], dtype=np.float64)
        norms = np.linalg.norm(matrix, axis=1)
        if matrix.size and not np.allclose(norms, 1.0, atol=1e-6):
            raise RetrievalError("dense index vectors are not unit-normalized")
        return DenseIndex(ids=payload["ids"], matrix=matrix, dimension=payload["dimension"])
    raise RetrievalError(f"unknown persisted kind {payload['kind']!r}")


def save_results(results: Iterable[RetrievalResult], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for res in results:
            for rank, (tid, score) in enumerate(res.ranked, start=1):
                fh.write(
                    json.dumps(
                        {"query_id": res.query_id, "rank": rank, "table_id": tid, "score": score}
                    )
                    + "\n"
                )


def load_results(path: str | Path) -> list[RetrievalResult]:
    by_query: dict[str, list[tuple[int, str, float]]] = {}
    order: list[str] = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if rec["query_id"] not in by_query:
                order.append(rec["query_id"])
                by_query[rec["query_id"]] = []
            by_query[rec["query_id"]].append((rec["rank"], rec["table_id"], rec["score"]))
    results = []
    for qid in order:
        entries = sorted(by_query[qid])
        results.append(
            RetrievalResult(query_id=qid, ranked=tuple((tid, s) for _, tid, s in entries))
        )
    return results


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class KMetrics:
    precision: float
    recall: float
    f1: float


@dataclass
class RetrievalReport:
    per_k: dict[int, KMetrics]
    per_query_recalls: dict[str, dict[int, float]] = field(default_factory=dict)
    skipped_empty_gold: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "per_k": {
                    str(k): {"precision": m.precision, "recall": m.recall, "f1": m.f1}
                    for k, m in sorted(self.per_k.items())
                },
                "skipped_empty_gold": self.skipped_empty_gold,
            },
            sort_keys=True,
        )


def f1_from_percentages(precision: float, recall: float) -> float:
    """Harmonic mean of two percentage values, 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def eval_retrieval(
    results: Sequence[RetrievalResult],
    gold: Mapping[str, set[str]],
    ks: Sequence[int],
) -> RetrievalReport:
    """Macro-averaged P/R at each k; F1 is the harmonic mean of the macro
    averages (not the mean of per-query F1s)."""
    usable = []
    skipped = 0
    for res in results:
        if res.query_id not in gold:
            raise RetrievalError(f"no gold set for query {res.query_id!r}")
        if not gold[res.query_id]:
            skipped += 1
            continue
        usable.append(res)
    per_k = {}
    per_query_recalls: dict[str, dict[int, float]] = {r.query_id: {} for r in usable}
    for k in ks:
        precisions = []
        recalls = []
        for res in usable:
            top = set(res.table_ids()[:k])
            g = gold[res.query_id]
            hit = len(top & g)
            precisions.append(100.0 * hit / k)
            recall = 100.0 * hit / len(g)
            recalls.append(recall)
            per_query_recalls[res.query_id][k] = recall
        macro_p = float(np.mean(precisions)) if precisions else 0.0
        macro_r = float(np.mean(recalls)) if recalls else 0.0
        per_k[k] = KMetrics(macro_p, macro_r, f1_from_percentages(macro_p, macro_r))
    if skipped:
        log.warning("eval_retrieval skipped %d queries with empty gold sets", skipped)
    return RetrievalReport(per_k=per_k, per_query_recalls=per_query_recalls, skipped_empty_gold=skipped)


def noise_mix(
    gold_tables: Sequence[Table],
    distractors: Sequence[Table],
    ratio: float,
    seed: int,
) -> list[Table]:
    """All gold tables plus round(ratio * n_gold) distractors, shuffled by seed."""
    if ratio < 0:
        raise RetrievalError("ratio must be non-negative")
    import math

    n_extra = int(math.floor(ratio * len(gold_tables) + 0.5))
    if n_extra > len(distractors):
        raise RetrievalError(
            f"need {n_extra} distractors but only {len(distractors)} available"
        )
    rng = Random(seed)
    chosen = rng.sample(list(distractors), n_extra)
    mixed = list(gold_tables) + chosen
    rng.shuffle(mixed)
    return mixed
