from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot_ccd.errors import InsufficientCandidates, LengthMismatch
from fewshot_ccd.metrics import (
    ConfusionCounts,
    average_precision_at_r,
    confusion,
    default_grid,
    f1,
    map_at_r,
    random_ap_at_r,
    random_map_at_r,
    rank_candidates,
    retrieval_run,
    sweep_threshold,
)
from fewshot_ccd.rng import Xoshiro256


def naive_f1(preds, labels):
    tp = fp = fn = 0
    for p, y in zip(preds, labels):
        if p and y:
            tp += 1
        elif p:
            fp += 1
        elif y:
            fn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    return prec, rec, (2 * prec * rec / (prec + rec) if prec + rec else 0.0)


def naive_ap(ranked, relevant, R):
    precisions = [sum(1 for x in ranked[: i + 1] if x in relevant) / (i + 1) for i in range(R) if ranked[i] in relevant]
    return sum(precisions) / R


def test_confusion_examples():
    assert confusion([1, 1, 0], [1, 1, 0]) == ConfusionCounts(2, 0, 1, 0)
    c = confusion([0, 0, 1], [1, 1, 0])
    assert c.tp == 0 and c.tn == 0
    with pytest.raises(LengthMismatch):
        confusion([1], [1, 0])


def test_f1_examples():
    assert f1(ConfusionCounts(5, 0, 0, 0)) == (1.0, 1.0, 1.0)
    p, r, score = f1(ConfusionCounts(3, 1, 0, 2))
    assert (p, r) == (0.75, 0.6)
    assert score == pytest.approx(0.666667, abs=1e-6)
    assert f1(ConfusionCounts(0, 3, 4, 2))[2] == 0.0


def test_f1_oracle_1000():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        preds, labels = rng.integers(0, 2, n), rng.integers(0, 2, n)
        got = f1(confusion(preds, labels))
        assert np.max(np.abs(np.subtract(got, naive_f1(preds, labels)))) <= 1e-12


@given(st.integers(1, 50), st.integers(0, 50), st.integers(1, 50))
def test_harmonic_mean_bound(tp, fp, fn):
    p, r, score = f1(ConfusionCounts(tp, fp, 0, fn))
    assert min(p, r) - 1e-15 <= score <= max(p, r) + 1e-15


def test_ap_hand_value():
    assert average_precision_at_r(["a", "x", "b"], {"a", "b"}, 3) == pytest.approx(5 / 9, abs=1e-15)


def test_map_edges():
    from fewshot_ccd.metrics import RetrievalQuery, RetrievalRun

    perfect = RetrievalRun([RetrievalQuery(["a", "b", "x"], frozenset("ab"), 2)] * 3)
    none = RetrievalRun([RetrievalQuery(["x", "y", "a"], frozenset("a"), 1)])
    assert map_at_r(perfect) == 1.0 and map_at_r(none) == 0.0
    with pytest.raises(InsufficientCandidates):
        average_precision_at_r(["a"], {"a"}, 2)


def test_map_oracle_1000():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        ranked = list(rng.permutation(n))
        relevant = set(rng.choice(n, int(rng.integers(1, n)), replace=False).tolist())
        R = int(rng.integers(1, n + 1))
        assert abs(average_precision_at_r(ranked, relevant, R) - naive_ap(ranked, relevant, R)) <= 1e-12


@given(st.permutations(list(range(8))), st.sets(st.integers(0, 7), min_size=1), st.integers(1, 8), st.integers(1, 7))
def test_ap_swap_monotone(ranked, relevant, R, pos):
    # moving a relevant item one rank up (within top R) never lowers AP@R
    if pos >= R or ranked[pos] not in relevant or ranked[pos - 1] in relevant:
        return
    swapped = list(ranked)
    swapped[pos - 1], swapped[pos] = swapped[pos], swapped[pos - 1]
    assert average_precision_at_r(swapped, relevant, R) >= average_precision_at_r(ranked, relevant, R)


def test_sweep_separable():
    s = np.array([0.6, 0.7, 0.9, -0.2, -0.5])
    y = np.array([1, 1, 1, 0, 0], bool)
    delta, score = sweep_threshold(s, y)
    assert score == 1.0
    assert delta == pytest.approx(default_grid()[default_grid() > -0.2][0])


def test_sweep_all_negative():
    delta, score = sweep_threshold(np.array([0.1, 0.2]), np.array([0, 0], bool))
    assert score == 0.0 and delta == -1.0


def test_sweep_oracle():
    rng = np.random.default_rng(2)
    for _ in range(50):
        s = rng.uniform(-1, 1, 40)
        y = rng.random(40) < 0.5
        scores = [naive_f1(s >= d, y)[2] for d in default_grid()]
        best = int(np.argmax(scores))
        delta, score = sweep_threshold(s, y)
        assert delta == default_grid()[best] and score == pytest.approx(scores[best], abs=1e-12)


@given(st.integers(0, 1000), st.floats(0.01, 100))
def test_sweep_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(20, 4)), rng.normal(size=(20, 4))
    y = rng.random(20) < 0.5

    def cos(x, z):
        return np.einsum("ij,ij->i", x, z) / (np.linalg.norm(x, axis=1) * np.linalg.norm(z, axis=1))

    s1 = cos(a, b)
    s2 = cos(c * a, b)
    d1, _ = sweep_threshold(s1, y)
    near = np.abs(s1 - d1) < 1e-9
    assert np.array_equal((s1 >= d1)[~near], (s2 >= d1)[~near])


def test_rank_candidates_examples():
    assert rank_candidates([1.0, 0.0], [[0.0, 1.0], [2.0, 0.0]], ["orth", "copy"]) == ["copy", "orth"]
    assert rank_candidates([1.0, 0.0], [[1.0, 1.0], [1.0, 1.0]], ["b", "a"]) == ["a", "b"]


def test_rank_candidates_bruteforce():
    rng = np.random.default_rng(3)
    q = rng.normal(size=5)
    C = rng.normal(size=(100, 5))
    ids = list(range(100))
    got = rank_candidates(q, C, ids)
    cos = C @ q / (np.linalg.norm(C, axis=1) * np.linalg.norm(q))

    def better(i, j):  # i strictly ahead of j
        return cos[i] > cos[j] or (cos[i] == cos[j] and i < j)

    # count-based ranking: position = number of candidates ahead
    pos = {i: sum(better(j, i) for j in ids) for i in ids}
    assert got == sorted(ids, key=lambda i: pos[i])


def test_retrieval_run_matches_rank_candidates():
    rng = np.random.default_rng(4)
    E = rng.normal(size=(12, 3))
    labels = [i % 3 for i in range(12)]
    ids = [f"s{i:02d}" for i in range(12)]
    run = retrieval_run(E, labels, ids)
    for i, qr in enumerate(run.queries):
        others = [j for j in range(12) if j != i]
        assert list(qr.ranked) == rank_candidates(E[i], E[others], [ids[j] for j in others])
        assert qr.R == 3


def test_random_baseline_matches_simulation():
    M, r, R = 20, 5, 5
    rng = Xoshiro256(0)
    items = list(range(M))
    total = 0.0
    n = 20000
    for _ in range(n):
        rng.shuffle(items)
        total += naive_ap(items, set(range(r)), R)
    assert random_ap_at_r(M, r, R) == pytest.approx(total / n, abs=0.01)


def test_random_map_skips_singletons():
    labels = ["a", "a", "b"]
    assert random_map_at_r(labels) == pytest.approx(random_ap_at_r(2, 1, 1))
