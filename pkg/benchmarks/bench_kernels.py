#!/usr/bin/env python3
"""Times the numba kernels against the pure-numpy fallbacks on synthetic
workloads: BM25 scoring over a random corpus and the kappa bootstrap.

Run: python benchmarks/bench_kernels.py [--docs 20000] [--queries 200]
"""

import argparse
import time

import numpy as np

from tabrag import kernels


def bench(label, fn, *args, repeat=3):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    print(f"  {label:<12} {best * 1000:9.2f} ms")
    return result, best


def make_postings(rng, n_docs, n_terms, avg_postings_per_term=200):
    counts = rng.poisson(avg_postings_per_term, n_terms).clip(1, n_docs)
    post_ptr = np.zeros(n_terms + 1, dtype=np.int64)
    np.cumsum(counts, out=post_ptr[1:])
    total = int(post_ptr[-1])
    # doc ids must be unique within each term's slice, as built indexes are
    post_doc = np.empty(total, dtype=np.int64)
    for t in range(n_terms):
        lo, hi = post_ptr[t], post_ptr[t + 1]
        post_doc[lo:hi] = rng.choice(n_docs, hi - lo, replace=False)
    post_tf = rng.integers(1, 8, total).astype(np.float64)
    df = counts.astype(np.float64)
    idf = np.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
    doc_len = rng.integers(20, 300, n_docs).astype(np.float64)
    return idf, post_ptr, post_doc, post_tf, doc_len, float(doc_len.mean())


def bench_bm25(n_docs, n_queries, seed=0):
    rng = np.random.default_rng(seed)
    n_terms = 5000
    idf, post_ptr, post_doc, post_tf, doc_len, avgdl = make_postings(rng, n_docs, n_terms)
    queries = [rng.integers(0, n_terms, rng.integers(3, 12), dtype=np.int64) for _ in range(n_queries)]

    def run(fn):
        acc = 0.0
        for q in queries:
            acc += fn(q, idf, post_ptr, post_doc, post_tf, doc_len, avgdl, 1.2, 0.75)[0]
        return acc

    print(f"BM25 scoring: {n_docs} docs, {n_queries} queries")
    (out_np, t_np) = bench("numpy", run, kernels.bm25_scores_numpy)
    if kernels.bm25_scores_numba is not None:
        run(kernels.bm25_scores_numba)  # warm the JIT outside the timer
        (out_nb, t_nb) = bench("numba", run, kernels.bm25_scores_numba)
        assert out_np == out_nb, "kernel paths disagree"
        print(f"  speedup      {t_np / t_nb:9.2f}x")
    else:
        print("  numba unavailable; fallback only")


def bench_bootstrap(n_items, n_resamples, seed=0):
    rng = np.random.default_rng(seed)
    a_idx = rng.integers(0, 5, n_items)
    b_idx = rng.integers(0, 5, n_items)
    resamples = rng.integers(0, n_items, size=(n_resamples, n_items))
    print(f"kappa bootstrap: {n_items} items, {n_resamples} resamples")
    (out_np, t_np) = bench("numpy", kernels.bootstrap_kappas_numpy, a_idx, b_idx, 5, resamples)
    if kernels.bootstrap_kappas_numba is not None:
        kernels.bootstrap_kappas_numba(a_idx, b_idx, 5, resamples[:2])
        (out_nb, t_nb) = bench("numba", kernels.bootstrap_kappas_numba, a_idx, b_idx, 5, resamples)
        assert np.array_equal(out_np, out_nb), "kernel paths disagree"
        print(f"  speedup      {t_np / t_nb:9.2f}x")
    else:
        print("  numba unavailable; fallback only")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--docs", type=int, default=20000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--items", type=int, default=500)
    parser.add_argument("--resamples", type=int, default=2000)
    args = parser.parse_args()
    print(f"active package path: {kernels.active_path()}\n")
    bench_bm25(args.docs, args.queries)
    print()
    bench_bootstrap(args.items, args.resamples)
