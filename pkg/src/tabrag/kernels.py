"""Numeric inner loops with a numba fast path and a pure-numpy fallback.

The active path is chosen once at import time: numba is used when it imports
cleanly, unless ``TABRAG_ACCEL=numpy`` forces the fallback.  Both paths walk
postings and resamples in the same order, so they produce bit-identical
floats; ``benchmarks/bench_kernels.py`` times one against the other.
"""

from __future__ import annotations

import os

import numpy as np

_FORCED = os.environ.get("TABRAG_ACCEL", "").strip().lower()

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and _FORCED != "numpy"
if _FORCED == "numba" and not HAS_NUMBA:  # pragma: no cover
    raise RuntimeError("TABRAG_ACCEL=numba but numba is not importable")


def active_path() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# BM25 scoring over CSR-style postings
#
# post_ptr[t]:post_ptr[t+1] indexes the (doc, tf) pairs of term t; doc ids
# must be unique within a slice (the fancy-index += in the numpy path relies
# on it).  Scores accumulate query term by query term, so both paths add the
# identical per-term contributions in the identical order.


def bm25_scores_numpy(query_tids, idf, post_ptr, post_doc, post_tf, doc_len, avgdl, k1, b):
    scores = np.zeros(doc_len.size, dtype=np.float64)
    for t in query_tids:
        lo, hi = post_ptr[t], post_ptr[t + 1]
        docs = post_doc[lo:hi]
        tf = post_tf[lo:hi]
        denom = tf + k1 * (1.0 - b + b * doc_len[docs] / avgdl)
        scores[docs] += idf[t] * tf * (k1 + 1.0) / denom
    return scores


def _bm25_scores_loop(query_tids, idf, post_ptr, post_doc, post_tf, doc_len, avgdl, k1, b):
    scores = np.zeros(doc_len.size, dtype=np.float64)
    for qi in range(query_tids.size):
        t = query_tids[qi]
        w = idf[t]
        for p in range(post_ptr[t], post_ptr[t + 1]):
            d = post_doc[p]
            tf = post_tf[p]
            denom = tf + k1 * (1.0 - b + b * doc_len[d] / avgdl)
            scores[d] += w * tf * (k1 + 1.0) / denom
    return scores


# ---------------------------------------------------------------------------
# Cohen's kappa bootstrap
#
# ``pairs`` encodes each doubly-annotated item as label indices (a_i, b_i) in
# [0, n_labels); ``resample_idx`` is a (n_resamples, n_items) matrix drawn
# outside the kernel so both paths see the same resamples.


def kappa_from_pairs_numpy(a_idx, b_idx, n_labels):
    n = a_idx.size
    conf = np.zeros((n_labels, n_labels), dtype=np.float64)
    np.add.at(conf, (a_idx, b_idx), 1.0)
    p_o = np.trace(conf) / n
    p_e = float(np.sum(conf.sum(axis=1) * conf.sum(axis=0))) / (n * n)
    if p_e >= 1.0:
        return 1.0 if p_o >= 1.0 else 0.0
    return (p_o - p_e) / (1.0 - p_e)


def bootstrap_kappas_numpy(a_idx, b_idx, n_labels, resample_idx):
    out = np.empty(resample_idx.shape[0], dtype=np.float64)
    for r in range(resample_idx.shape[0]):
        sel = resample_idx[r]
        out[r] = kappa_from_pairs_numpy(a_idx[sel], b_idx[sel], n_labels)
    return out


def _bootstrap_kappas_loop(a_idx, b_idx, n_labels, resample_idx):
    n_resamples, n = resample_idx.shape
    out = np.empty(n_resamples, dtype=np.float64)
    conf = np.zeros((n_labels, n_labels), dtype=np.float64)
    for r in range(n_resamples):
        conf[:, :] = 0.0
        for i in range(n):
            j = resample_idx[r, i]
            conf[a_idx[j], b_idx[j]] += 1.0
        agree = 0.0
        for k in range(n_labels):
            agree += conf[k, k]
        p_o = agree / n
        p_e = 0.0
        for k in range(n_labels):
            row = 0.0
            col = 0.0
            for m in range(n_labels):
                row += conf[k, m]
                col += conf[m, k]
            p_e += row * col
        p_e /= n * n
        if p_e >= 1.0:
            out[r] = 1.0 if p_o >= 1.0 else 0.0
        else:
            out[r] = (p_o - p_e) / (1.0 - p_e)
    return out


if HAS_NUMBA:
    bm25_scores_numba = njit(cache=True)(_bm25_scores_loop)
    bootstrap_kappas_numba = njit(cache=True)(_bootstrap_kappas_loop)
else:
    bm25_scores_numba = None
    bootstrap_kappas_numba = None

if USE_NUMBA:
    bm25_scores = bm25_scores_numba
    bootstrap_kappas = bootstrap_kappas_numba
else:
    bm25_scores = bm25_scores_numpy
    bootstrap_kappas = bootstrap_kappas_numpy
