"""Affinity matrices, top-k pair selection and the evaluation metrics."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .nn.tensor import ShapeMismatch

__all__ = [
    "DegenerateLabels",
    "MetricsReport",
    "affinity_matrix",
    "admissible_mask",
    "select_best",
    "top_k_pairs",
    "top_k_success",
    "auc_roc",
    "classification_metrics",
    "best_threshold_by_f1",
    "random_baseline",
    "random_baseline_exact",
    "affinity_tensor_best",
]


class DegenerateLabels(ValueError):
    """All labels belong to one class, so the requested quantity is undefined."""


def affinity_matrix(e_center: np.ndarray, e_context: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Dot products ``A[i, j] = e_center[i] . e_context[j]`` with the diagonal set to -inf.

    ``mask`` optionally marks further inadmissible pairs (True = excluded).
    """
    ec = np.asarray(e_center, dtype=float)
    ex = np.asarray(e_context, dtype=float)
    if ec.ndim != 2 or ec.shape != ex.shape:
        raise ShapeMismatch(f"embedding matrices must share shape (m, d): {ec.shape} vs {ex.shape}")
    a = ec @ ex.T
    np.fill_diagonal(a, -np.inf)
    if mask is not None:
        a[np.asarray(mask, dtype=bool)] = -np.inf
    return a


def admissible_mask(scenario, footprint_radius: float = 0.30) -> np.ndarray:
    """True where a pair is excluded before planning (shared grasp point or overlapping bases)."""
    g = scenario.grasp_set
    idx = np.array([c.grasp_index for c in g])
    base = np.array([c.base for c in g], dtype=float).reshape(-1, 2)
    d = np.linalg.norm(base[:, None] - base[None, :], axis=-1)
    return (idx[:, None] == idx[None, :]) | (d < 2 * footprint_radius)


def _order(a: np.ndarray) -> np.ndarray:
    """Flat indices of finite entries sorted by value descending, then row, then column."""
    flat = a.ravel()
    cand = np.flatnonzero(np.isfinite(flat))
    # lexsort sorts by the last key first; flat index order is (row, col) order
    return cand[np.lexsort((cand, -flat[cand]))]


def select_best(a: np.ndarray) -> tuple[int, int]:
    a = np.asarray(a, dtype=float)
    if a.shape[0] < 2:
        raise ValueError("need m >= 2")
    pairs = top_k_pairs(a, 1)
    if not pairs:
        raise ValueError("no admissible pair")
    return pairs[0]


def top_k_pairs(a: np.ndarray, k: int) -> list[tuple[int, int]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    a = np.asarray(a, dtype=float)
    order = _order(a)[:k]
    m = a.shape[1]
    return [(int(f // m), int(f % m)) for f in order]


def top_k_success(a: np.ndarray, dc_sets: dict, k: int) -> bool:
    return any(j in dc_sets.get(i, ()) for i, j in top_k_pairs(a, k))


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc_roc: float | None
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self) -> dict:
        return asdict(self)


def auc_roc(scores, labels) -> float:
    """Mann-Whitney statistic: P(score_pos > score_neg) with ties counted half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("AUC needs both classes")
    r = rankdata(s)  # average ranks give ties half credit
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def classification_metrics(scores, labels, threshold: float) -> MetricsReport:
    """Confusion-matrix metrics for ``score >= threshold``; AUC is None for single-class labels."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    n = len(y)
    acc = (tp + tn) / n if n else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    try:
        auc = auc_roc(s, y)
    except DegenerateLabels:
        auc = None
    return MetricsReport(acc, prec, rec, f1, auc, float(threshold), tp, fp, tn, fn)


def best_threshold_by_f1(scores, labels) -> float:
    """Maximize F1 over thresholds at midpoints of consecutive unique scores; ties take the smallest."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    if y.min(initial=1) == y.max(initial=0) or len(y) == 0:
        raise DegenerateLabels("threshold selection needs both classes")
    u = np.unique(s)
    if len(u) == 1:
        return float(u[0])
    cands = (u[:-1] + u[1:]) / 2
    order = np.argsort(-s, kind="stable")
    ys = y[order]
    ss = s[order]
    tp_cum = np.cumsum(ys)
    fp_cum = np.cumsum(1 - ys)
    n_pos = int(y.sum())
    best_t, best_f = None, -1.0
    for t in cands:
        k = int(np.sum(ss >= t))  # predictions with score >= t
        tp = int(tp_cum[k - 1]) if k else 0
        fp = int(fp_cum[k - 1]) if k else 0
        denom = 2 * tp + fp + (n_pos - tp)
        f = 2 * tp / denom if denom else 0.0
        if f > best_f + 1e-15:
            best_f, best_t = f, float(t)
    return best_t


def random_baseline(m: int, dc_sets: dict, k: int, trials: int, seed: int,
                    mask: np.ndarray | None = None) -> float:
    """Monte-Carlo success rate of ``k`` distinct ordered pairs drawn uniformly.

    Pairs come from the ``m * (m - 1)`` off-diagonal cells, minus ``mask``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    excl = np.eye(m, dtype=bool) if mask is None else (np.asarray(mask, dtype=bool) | np.eye(m, dtype=bool))
    cells = np.flatnonzero(~excl.ravel())
    if len(cells) == 0:
        return 0.0
    feasible = np.zeros(m * m, dtype=bool)
    for i, js in dc_sets.items():
        for j in js:
            feasible[i * m + j] = True
    hit = feasible[cells]
    n_hit = int(hit.sum())
    if n_hit == 0:
        return 0.0
    kk = min(k, len(cells))
    if n_hit == len(cells):
        return 1.0
    rng = np.random.default_rng(seed)
    n = len(cells)
    if 4 * kk > n:
        # small pools: random keys per cell, keep the kk smallest
        picks = np.argsort(rng.random((trials, n)), axis=1)[:, :kk]
    else:
        # large pools: draw with replacement and redraw rows that repeat a cell
        picks = rng.integers(0, n, size=(trials, kk))
        while True:
            srt = np.sort(picks, axis=1)
            bad = np.flatnonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))
            if len(bad) == 0:
                break
            picks[bad] = rng.integers(0, n, size=(len(bad), kk))
    return float(hit[picks].any(axis=1).mean())


def random_baseline_exact(m: int, dc_sets: dict, k: int, mask: np.ndarray | None = None) -> float:
    """Closed form of :func:`random_baseline`: 1 - C(n - f, k) / C(n, k)."""
    excl = np.eye(m, dtype=bool) if mask is None else (np.asarray(mask, dtype=bool) | np.eye(m, dtype=bool))
    n = int((~excl).sum())
    f = sum(1 for i, js in dc_sets.items() for j in js if not excl[i, j])
    kk = min(k, n)
    if n == 0:
        return 0.0
    return 1.0 - math.comb(n - f, kk) / math.comb(n, kk)


def affinity_tensor_best(e_center: np.ndarray, e_context: np.ndarray, n_robots: int,
                         exhaustive_limit: float = 1e6) -> tuple[int, tuple[int, ...], float]:
    """Best center and N-1 distinct contexts by mean context-center dot product.

    Returns ``(center, contexts, score)`` with contexts sorted ascending.
    Exhaustive over combinations when ``m ** (N - 1)`` is at most
    ``exhaustive_limit``, otherwise greedy per center, which is exact because
    the score is a sum of independent per-context terms.
    """
    ec = np.asarray(e_center, dtype=float)
    ex = np.asarray(e_context, dtype=float)
    m = ec.shape[0]
    if n_robots < 2 or m < n_robots:
        raise ValueError("need N >= 2 and m >= N")
    a = ec @ ex.T
    r = n_robots - 1
    if float(m) ** r <= exhaustive_limit:
        return _tensor_exhaustive(a, r)
    return _tensor_greedy(a, r)


def _tensor_exhaustive(a: np.ndarray, r: int):
    m = a.shape[0]
    best = (-math.inf, 0, ())
    for i in range(m):
        others = [j for j in range(m) if j != i]
        for combo in itertools.combinations(others, r):
            s = float(a[i, list(combo)].sum()) / r
            if s > best[0] + 1e-15:
                best = (s, i, combo)
    return best[1], tuple(best[2]), best[0]


def _tensor_greedy(a: np.ndarray, r: int):
    m = a.shape[0]
    best = (-math.inf, 0, ())
    for i in range(m):
        row = a[i].copy()
        row[i] = -math.inf
        # highest dots first; equal dots resolved toward the smaller index
        idx = np.lexsort((np.arange(m), -row))[:r]
        combo = tuple(sorted(int(j) for j in idx))
        s = float(a[i, list(combo)].sum()) / r
        if s > best[0] + 1e-15:
            best = (s, i, combo)
    return best[1], tuple(best[2]), best[0]
