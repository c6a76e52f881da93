import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import builders as B
from cograsp.nn.tensor import ShapeMismatch
from cograsp.ranking import (DegenerateLabels, _tensor_exhaustive, _tensor_greedy, admissible_mask,
                             affinity_matrix, affinity_tensor_best, auc_roc, best_threshold_by_f1,
                             classification_metrics, random_baseline, random_baseline_exact, select_best,
                             top_k_pairs, top_k_success)


def unit_rows(rng, m, d):
    x = rng.normal(size=(m, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# -- affinity and top-k ------------------------------------------------------------------


def test_affinity_matrix_diagonal_and_mask():
    ec = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    ex = np.array([[0.0, 1.0], [1.0, 0.0], [0.8, 0.6]])
    mask = np.zeros((3, 3), dtype=bool)
    mask[0, 2] = True
    a = affinity_matrix(ec, ex, mask)
    assert np.all(np.isneginf(np.diag(a)))
    assert np.isneginf(a[0, 2])
    assert a[0, 1] == 1.0 and a[1, 0] == 1.0
    assert a[2, 0] == pytest.approx(0.8) and a[2, 1] == pytest.approx(0.6)
    with pytest.raises(ShapeMismatch):
        affinity_matrix(ec, ex[:2])


def test_top_k_ordering_and_tie_breaks():
    a = np.array([[-np.inf, 0.5, 0.9],
                  [0.9, -np.inf, 0.2],
                  [0.5, 0.9, -np.inf]])
    # three entries tie at 0.9: row-major order; then the 0.5 tie the same way
    assert top_k_pairs(a, 5) == [(0, 2), (1, 0), (2, 1), (0, 1), (2, 0)]
    assert top_k_pairs(a, 100)[-1] == (1, 2)
    assert len(top_k_pairs(a, 100)) == 6
    assert select_best(a) == (0, 2)
    with pytest.raises(ValueError):
        top_k_pairs(a, 0)


def test_top_k_success():
    a = np.array([[-np.inf, 0.1, 0.3], [0.2, -np.inf, 0.0], [0.4, 0.5, -np.inf]])
    dc = {0: [1], 1: [0], 2: []}
    # ranking: (2,1) .5, (2,0) .4, (0,2) .3, (1,0) .2
    assert not top_k_success(a, dc, 3)
    assert top_k_success(a, dc, 4)


def test_select_best_needs_an_admissible_pair():
    with pytest.raises(ValueError):
        select_best(np.full((3, 3), -np.inf))
    with pytest.raises(ValueError):
        select_best(np.zeros((1, 1)))


def test_admissible_mask_matches_independent_rule():
    sc = B.two_rooms()
    mask = admissible_mask(sc)
    for i in range(sc.m):
        for j in range(sc.m):
            if i != j:
                assert mask[i, j] == (not B.admissible(sc, i, j))


# -- classification metrics -----------------------------------------------------------

# (scores, labels, threshold, (tp, fp, tn, fn), (accuracy, precision, recall, f1)), counted by hand
CONFUSION = [
    ([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0], 0.5, (1, 1, 1, 1), (0.5, 0.5, 0.5, 0.5)),
    ([0.9, 0.7, 0.6, 0.2, 0.1], [1, 1, 0, 0, 1], 0.65, (2, 0, 2, 1), (0.8, 1.0, 2 / 3, 0.8)),
    ([0.1, 0.2], [1, 0], 0.5, (0, 0, 1, 1), (0.5, 0.0, 0.0, 0.0)),
    ([0.5, 0.4], [0, 0], 0.5, (0, 1, 1, 0), (0.5, 0.0, 0.0, 0.0)),
    ([0.9, 0.8, 0.7, 0.6], [0, 0, 1, 1], 0.65, (1, 2, 0, 1), (0.25, 1 / 3, 0.5, 0.4)),
    ([0.3, 0.3, 0.3], [1, 1, 0], 0.3, (2, 1, 0, 0), (2 / 3, 2 / 3, 1.0, 0.8)),
]


@pytest.mark.parametrize("scores,labels,t,counts,rates", CONFUSION)
def test_confusion_fixtures(scores, labels, t, counts, rates):
    r = classification_metrics(scores, labels, t)
    assert (r.tp, r.fp, r.tn, r.fn) == counts
    np.testing.assert_allclose([r.accuracy, r.precision, r.recall, r.f1], rates, atol=1e-12)
    assert r.threshold == t


def test_metrics_auc_none_for_single_class_and_input_checks():
    assert classification_metrics([0.5, 0.4], [0, 0], 0.5).auc_roc is None
    assert classification_metrics([0.9, 0.8, 0.7, 0.6], [0, 0, 1, 1], 0.65).auc_roc == 0.0
    with pytest.raises(ValueError):
        classification_metrics([0.1, 0.2], [1], 0.5)
    with pytest.raises(ValueError):
        classification_metrics([0.1, 0.2], [1, 2], 0.5)


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 6), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pair_count(rows):
    scores = [s / 7 for s, _ in rows]  # coarse grid forces ties
    labels = [int(y) for _, y in rows]
    if 0 < sum(labels) < len(labels):
        assert abs(auc_roc(scores, labels) - pairwise_auc(scores, labels)) <= 1e-12
    else:
        with pytest.raises(DegenerateLabels):
            auc_roc(scores, labels)


def test_auc_examples():
    assert auc_roc([0.9, 0.1], [1, 0]) == 1.0
    assert auc_roc([0.1, 0.9], [1, 0]) == 0.0
    assert auc_roc([0.5, 0.5], [1, 0]) == 0.5
    assert auc_roc([0.8, 0.6, 0.7, 0.2], [1, 1, 0, 0]) == 0.75


def test_best_threshold_example():
    # candidates .85 (F1 2/3), .75 (F1 1/2), .65 (F1 4/5)
    assert best_threshold_by_f1([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == pytest.approx(0.65)
    with pytest.raises(DegenerateLabels):
        best_threshold_by_f1([0.1, 0.2], [1, 1])


def test_best_threshold_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.integers(3, 30)
        s = np.round(rng.random(n), 2)
        y = rng.integers(0, 2, n)
        if y.min() == y.max() or len(np.unique(s)) < 2:
            continue
        u = np.unique(s)
        cands = (u[:-1] + u[1:]) / 2
        f1 = [classification_metrics(s, y, t).f1 for t in cands]
        best = cands[int(np.argmax(f1))]  # argmax keeps the first maximum, the smallest threshold
        assert best_threshold_by_f1(s, y) == pytest.approx(best)


# -- random baseline ------------------------------------------------------------------

M4 = {0: [1], 1: [0], 2: [], 3: []}


def test_random_baseline_exact_hand_values():
    # 12 ordered pairs, 2 feasible
    assert random_baseline_exact(4, M4, 1) == pytest.approx(2 / 12)
    assert random_baseline_exact(4, M4, 5) == pytest.approx(1 - 252 / 792)
    assert random_baseline_exact(4, M4, 12) == 1.0
    assert random_baseline_exact(4, {}, 5) == 0.0


@pytest.mark.parametrize("k", [1, 3, 5])
def test_random_baseline_monte_carlo_matches_exact(k):
    est = random_baseline(4, M4, k, trials=100_000, seed=1)
    assert abs(est - random_baseline_exact(4, M4, k)) <= 0.01


def test_random_baseline_large_pool_and_mask():
    m = 20
    dc = {0: [5, 7], 5: [0], 9: [3]}
    mask = np.zeros((m, m), dtype=bool)
    mask[:, 19] = True
    for k in (1, 5):
        est = random_baseline(m, dc, k, trials=100_000, seed=2, mask=mask)
        assert abs(est - random_baseline_exact(m, dc, k, mask)) <= 0.01
    assert random_baseline(m, dc, 5, 1000, seed=3) == random_baseline(m, dc, 5, 1000, seed=3)


def test_random_baseline_degenerate_cases():
    assert random_baseline(4, {}, 3, 10, 0) == 0.0
    full = {i: [j for j in range(3) if j != i] for i in range(3)}
    assert random_baseline(3, full, 1, 10, 0) == 1.0
    with pytest.raises(ValueError):
        random_baseline(4, M4, 1, 0, 0)


# -- N robots -------------------------------------------------------------------------


def test_two_robots_reduce_to_select_best():
    rng = np.random.default_rng(4)
    for _ in range(20):
        ec, ex = unit_rows(rng, 9, 5), unit_rows(rng, 9, 5)
        i, ctx, score = affinity_tensor_best(ec, ex, 2)
        assert (i, ctx[0]) == select_best(affinity_matrix(ec, ex))
        assert score == pytest.approx(ec[i] @ ex[ctx[0]])


@pytest.mark.parametrize("n", [3, 4])
def test_greedy_equals_exhaustive(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        ec, ex = unit_rows(rng, 8, 4), unit_rows(rng, 8, 4)
        a = ec @ ex.T
        e = _tensor_exhaustive(a, n - 1)
        g = _tensor_greedy(a, n - 1)
        assert e[:2] == g[:2]
        assert e[2] == pytest.approx(g[2], abs=1e-12)
        assert affinity_tensor_best(ec, ex, n, exhaustive_limit=0) == g


def test_tensor_best_scores_by_brute_force():
    rng = np.random.default_rng(9)
    ec, ex = unit_rows(rng, 6, 3), unit_rows(rng, 6, 3)
    i, ctx, score = affinity_tensor_best(ec, ex, 3)
    a = ec @ ex.T
    best = max(((a[c, p] + a[c, q]) / 2, c, (p, q))
               for c in range(6) for p in range(6) for q in range(p + 1, 6) if c not in (p, q))
    assert (i, ctx) == (best[1], best[2])
    assert math.isclose(score, best[0], abs_tol=1e-12)
    with pytest.raises(ValueError):
        affinity_tensor_best(ec, ex, 7)
    with pytest.raises(ValueError):
        affinity_tensor_best(ec, ex, 1)
