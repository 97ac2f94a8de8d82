"""Binary (F1) and retrieval (MAP@R) evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInput, InsufficientCandidates, LengthMismatch, ZeroVector


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions, labels) -> ConfusionCounts:
    pred = np.asarray(predictions, dtype=bool)
    true = np.asarray(labels, dtype=bool)
    if pred.shape != true.shape:
        raise LengthMismatch(f"{pred.shape} predictions vs {true.shape} labels")
    if pred.size == 0:
        raise EmptyInput("no predictions")
    return ConfusionCounts(
        tp=int(np.sum(pred & true)),
        fp=int(np.sum(pred & ~true)),
        tn=int(np.sum(~pred & ~true)),
        fn=int(np.sum(~pred & true)),
    )


def f1(counts: ConfusionCounts) -> tuple[float, float, float]:
    """(precision, recall, f1); any 0/0 is taken as 0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def default_grid() -> np.ndarray:
    return np.linspace(-1.0, 1.0, 201)


def sweep_threshold(similarities, labels, grid=None) -> tuple[float, float]:
    """Threshold on the grid maximizing F1 of ``similarity >= delta``.

    Ties go to the smaller threshold.
    """
    s = np.asarray(similarities, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} similarities vs {y.shape} labels")
    grid = default_grid() if grid is None else np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0:
        raise ValueError("empty threshold grid")
    # counts of positives / negatives with s >= delta, via sorted search
    pos = np.sort(s[y])
    neg = np.sort(s[~y])
    tp = len(pos) - np.searchsorted(pos, grid, side="left")
    fp = len(neg) - np.searchsorted(neg, grid, side="left")
    fn = len(pos) - tp
    # same arithmetic as f1() so ties resolve identically
    with np.errstate(divide="ignore", invalid="ignore"):
        p = tp / (tp + fp)
        r = tp / (tp + fn)
        scores = np.where(tp > 0, 2 * p * r / (p + r), 0.0)
    best = int(np.argmax(scores))
    return float(grid[best]), float(scores[best])


@dataclass
class RetrievalQuery:
    ranked: Sequence  # candidate ids, best first
    relevant: frozenset
    R: int


@dataclass
class RetrievalRun:
    queries: list[RetrievalQuery]


def average_precision_at_r(ranked, relevant, R: int) -> float:
    if R < 1 or len(ranked) < R:
        raise InsufficientCandidates(f"need R >= 1 and at least R candidates (R={R}, n={len(ranked)})")
    hits = 0
    total = 0.0
    for i, cid in enumerate(ranked[:R], start=1):
        if cid in relevant:
            hits += 1
            total += hits / i
    return total / R


def map_at_r(run: RetrievalRun) -> float:
    if not run.queries:
        raise EmptyInput("no queries")
    return float(np.mean([average_precision_at_r(q.ranked, q.relevant, q.R) for q in run.queries]))


def _cosines(query, candidates) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    C = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    qn = np.linalg.norm(q)
    cn = np.linalg.norm(C, axis=1)
    if qn == 0 or np.any(cn == 0):
        raise ZeroVector("cannot rank zero vectors")
    return C @ q / (cn * qn)


def rank_candidates(query, candidates, ids=None) -> list:
    """Candidate ids by descending cosine to ``query``; ties by ascending id."""
    if len(candidates) == 0:
        raise EmptyInput("no candidates")
    ids = list(range(len(candidates))) if ids is None else list(ids)
    cos = _cosines(query, candidates)
    order = sorted(range(len(ids)), key=lambda i: (-cos[i], ids[i]))
    return [ids[i] for i in order]


def retrieval_run(embeddings, labels, ids, R: int | None = None) -> RetrievalRun:
    """Every item queries all others; relevant = same label.

    Per query ``R = min(R, |relevant|)`` (``R=None`` means ``|relevant|``).
    Items without any same-label partner are skipped.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms == 0):
        raise ZeroVector("zero embedding in retrieval set")
    U = E / norms[:, None]
    S = U @ U.T
    labels = list(labels)
    ids = list(ids)
    id_rank = np.argsort(np.argsort(np.array(ids, dtype=object)))
    by_label: dict = {}
    for i, lab in enumerate(labels):
        by_label.setdefault(lab, set()).add(ids[i])
    queries = []
    for i in range(len(ids)):
        relevant = by_label[labels[i]] - {ids[i]}
        if not relevant:
            continue
        cand = np.array([j for j in range(len(ids)) if j != i])
        order = cand[np.lexsort((id_rank[cand], -S[i, cand]))]
        r = len(relevant) if R is None else min(R, len(relevant))
        queries.append(RetrievalQuery([ids[j] for j in order], frozenset(relevant), r))
    return RetrievalRun(queries)


def random_ap_at_r(n_candidates: int, n_relevant: int, R: int) -> float:
    """Expected AP@R of a uniformly random ranking.

    P(rank i relevant) = r/M and, given that, the expected number of
    relevant items in the top i is 1 + (i-1)(r-1)/(M-1).
    """
    M, r = n_candidates, n_relevant
    if R < 1 or M < R:
        raise InsufficientCandidates("need 1 <= R <= n_candidates")
    if r == 0:
        return 0.0
    total = 0.0
    for i in range(1, R + 1):
        hits = 1.0 + ((i - 1) * (r - 1) / (M - 1) if M > 1 else 0.0)
        total += (r / M) * hits / i
    return total / R


def random_map_at_r(labels, R: int | None = None) -> float:
    """Random-ranking baseline matching :func:`retrieval_run`'s query set."""
    labels = list(labels)
    sizes: dict = {}
    for lab in labels:
        sizes[lab] = sizes.get(lab, 0) + 1
    vals = []
    M = len(labels) - 1
    for lab in labels:
        rel = sizes[lab] - 1
        if rel == 0:
            continue
        vals.append(random_ap_at_r(M, rel, rel if R is None else min(R, rel)))
    return float(np.mean(vals)) if vals else 0.0
