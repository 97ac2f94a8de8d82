"""C-way K-shot episode sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Sequence

from .datasets import sample_balanced_pairs
from .errors import DegenerateEpisode, NotEnoughClasses, NotEnoughSamples
from .rng import Xoshiro256

DEFAULT_QUERY_CAP = 32


@dataclass(frozen=True)
class Episode:
    classes: tuple
    support: tuple  # (item, class) pairs, K per class
    query: tuple

    def groups(self, side: str) -> list[list]:
        items = self.support if side == "support" else self.query
        by_class = {c: [] for c in self.classes}
        for item, c in items:
            by_class[c].append(item)
        return [by_class[c] for c in self.classes]


def group_split(split: Sequence[tuple[object, Hashable]]) -> dict:
    """Map class -> items, classes in sorted order, items in input order."""
    grouped: dict = {}
    for item, c in split:
        grouped.setdefault(c, []).append(item)
    return {c: grouped[c] for c in sorted(grouped)}


def sample_episode(
    split,
    C: int,
    K: int,
    rng: Xoshiro256,
    query_cap: int | None = DEFAULT_QUERY_CAP,
) -> Episode:
    """Sample ``C`` classes uniformly, ``K`` support items per class, rest as query.

    ``split`` is a sequence of ``(item, class)`` or an already grouped dict.
    ``query_cap`` bounds the query size, split evenly across classes.
    """
    grouped = split if isinstance(split, dict) else group_split(split)
    if len(grouped) < C:
        raise NotEnoughClasses(f"split has {len(grouped)} classes, episode needs {C}")
    eligible = [c for c, items in grouped.items() if len(items) >= K + 1]
    if len(eligible) < C:
        raise NotEnoughSamples(f"only {len(eligible)} classes have >= {K + 1} items, need {C}")
    classes = tuple(rng.sample(eligible, C))
    per_class = None if query_cap is None else max(1, query_cap // C)
    support, query = [], []
    for c in classes:
        items = grouped[c]
        idx = rng.sample_indices(len(items), len(items))
        support += [(items[i], c) for i in idx[:K]]
        query += [(items[i], c) for i in idx[K:][:per_class]]
    return Episode(classes, tuple(support), tuple(query))


def _side_pairs(groups, rng, max_pairs):
    n_pos = sum(len(g) * (len(g) - 1) // 2 for g in groups)
    sizes = [len(g) for g in groups]
    n_neg = (sum(sizes) ** 2 - sum(n * n for n in sizes)) // 2
    n = min(n_pos, n_neg)
    if max_pairs is not None:
        n = min(n, max_pairs // 2)
    if n == 0:
        return []
    return sample_balanced_pairs(groups, n, rng)


def pairs_from_episode(ep: Episode, rng: Xoshiro256, max_pairs: int | None = None):
    """Balanced labeled pairs inside an episode.

    Returns ``(support_pairs, query_pairs)``, each a list of ``(a, b, label)``.
    Each side uses as many pairs as the scarcer label allows (optionally
    capped at ``max_pairs`` total).
    """
    if len(ep.classes) < 2:
        raise DegenerateEpisode("a one-class episode has no negative pairs")
    support = _side_pairs(ep.groups("support"), rng, max_pairs)
    query = _side_pairs(ep.groups("query"), rng, max_pairs)
    if not support or not query:
        raise DegenerateEpisode("episode yields no balanced pairs on one side")
    return support, query
