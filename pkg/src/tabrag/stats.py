"""Preference normalization and agreement/correlation statistics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np

from . import kernels

DEFAULT_BOOTSTRAP_SEED = 13
DEFAULT_BOOTSTRAP_RESAMPLES = 1000


class StatsError(ValueError):
    pass


def normalize_pref(score_a: float, score_b: float, tie_band: float = 0.0) -> int:
    """Collapse a score difference to {-1, 0, +1}; differences within
    ``tie_band`` count as ties."""
    if tie_band < 0:
        raise StatsError("tie_band must be non-negative")
    diff = score_a - score_b
    if diff > tie_band:
        return 1
    if diff < -tie_band:
        return -1
    return 0


def _check_xy(x: Sequence[float], y: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.ndim != 1 or xa.shape != ya.shape:
        raise StatsError("x and y must be 1-d sequences of equal length")
    if xa.size < 2:
        raise StatsError("need at least 2 observations")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise StatsError("correlation undefined for zero-variance input")
    return xa, ya


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation."""
    xa, ya = _check_xy(x, y)
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    return float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))


def rankdata(values: Sequence[float]) -> np.ndarray:
    """Ranks starting at 1; tied values receive their average rank."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=np.float64)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation over average ranks."""
    xa, ya = _check_xy(x, y)
    return pearson(rankdata(xa), rankdata(ya))


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    ci_low: float
    ci_high: float
    n_items: int
    n_resamples: int
    seed: int


def _encode_labels(a: Sequence[Hashable], b: Sequence[Hashable]) -> tuple[np.ndarray, np.ndarray, int]:
    labels = sorted(set(a) | set(b), key=repr)
    index = {lab: i for i, lab in enumerate(labels)}
    a_idx = np.asarray([index[v] for v in a], dtype=np.int64)
    b_idx = np.asarray([index[v] for v in b], dtype=np.int64)
    return a_idx, b_idx, len(labels)


def cohens_kappa(
    a: Sequence[Hashable],
    b: Sequence[Hashable],
    n_resamples: int = DEFAULT_BOOTSTRAP_RESAMPLES,
    seed: int = DEFAULT_BOOTSTRAP_SEED,
) -> KappaResult:
    """Chance-corrected agreement with a percentile-bootstrap 95% CI.

    The resample index matrix is drawn once with a seeded generator, so the
    numba and numpy kernel paths produce identical intervals.
    """
    if len(a) != len(b):
        raise StatsError("label lists must have equal length")
    if not a:
        raise StatsError("need at least one labeled item")
    a_idx, b_idx, n_labels = _encode_labels(a, b)
    n = a_idx.size
    conf = np.zeros((n_labels, n_labels), dtype=np.float64)
    np.add.at(conf, (a_idx, b_idx), 1.0)
    p_o = float(np.trace(conf)) / n
    p_e = float(np.sum(conf.sum(axis=1) * conf.sum(axis=0))) / (n * n)
    if p_e >= 1.0:
        raise StatsError("kappa undefined: expected agreement is 1")
    kappa = (p_o - p_e) / (1.0 - p_e)

    rng = np.random.default_rng(seed)
    resample_idx = rng.integers(0, n, size=(n_resamples, n), dtype=np.int64)
    kappas = kernels.bootstrap_kappas(a_idx, b_idx, n_labels, resample_idx)
    ci_low, ci_high = np.percentile(kappas, [2.5, 97.5])
    return KappaResult(
        kappa=float(kappa),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        n_items=n,
        n_resamples=n_resamples,
        seed=seed,
    )


def kappa_point(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Kappa without the bootstrap, for tight loops."""
    a_idx, b_idx, n_labels = _encode_labels(a, b)
    value = kernels.kappa_from_pairs_numpy(a_idx, b_idx, n_labels)
    n = a_idx.size
    conf = np.zeros((n_labels, n_labels))
    np.add.at(conf, (a_idx, b_idx), 1.0)
    p_e = float(np.sum(conf.sum(axis=1) * conf.sum(axis=0))) / (n * n)
    if p_e >= 1.0:
        raise StatsError("kappa undefined: expected agreement is 1")
    return value


def percent_agreement(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    if len(a) != len(b) or not a:
        raise StatsError("label lists must be non-empty and equal length")
    return sum(1 for x, y in zip(a, b) if x == y) / len(a)
