"""InfoNCE loss, contrastive batch sampling and the InfoNCE meta-objective."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .encoder import EncoderConfig, PairObjective, backward, forward, pooling_matrix, unit_rows
from .episodes import group_split
from .errors import InsufficientData, NoNegatives, NonPositiveTemperature
from .meta import MamlConfig, meta_step
from .rng import Xoshiro256

DEFAULT_TEMPERATURE = 0.07
DEFAULT_NEGATIVES = 15


def infonce_loss(q, k_pos, k_negs, t: float):
    """``-log softmax`` of the positive among ``[q.k+, q.k-_1..N] / t``.

    Returns ``(loss, dq, dk_pos, dk_negs)``.
    """
    if t <= 0:
        raise NonPositiveTemperature(f"temperature must be > 0, got {t}")
    q = np.asarray(q, dtype=np.float64)
    k_pos = np.asarray(k_pos, dtype=np.float64)
    k_negs = np.atleast_2d(np.asarray(k_negs, dtype=np.float64))
    if k_negs.size == 0:
        raise NoNegatives("InfoNCE needs at least one negative")
    keys = np.vstack([k_pos[None, :], k_negs])
    z = keys @ q / t
    zmax = z.max()
    lse = zmax + np.log(np.exp(z - zmax).sum())
    loss = float(lse - z[0])
    dz = np.exp(z - lse)
    dz[0] -= 1.0
    dq = dz @ keys / t
    dkeys = np.outer(dz, q) / t
    return loss, dq, dkeys[0], dkeys[1:]


@dataclass(frozen=True)
class ContrastiveBatch:
    query: object
    positive: object
    negatives: tuple
    temperature: float = DEFAULT_TEMPERATURE


def sample_contrastive_batch(split, N: int, rng: Xoshiro256, t: float = DEFAULT_TEMPERATURE, key=None) -> ContrastiveBatch:
    """One anchor, one same-class positive and ``N`` other-class negatives.

    ``split`` holds ``(item, class)`` pairs. The anchor is uniform over
    items whose class has a second member. ``key`` maps items to ids for
    the distinctness check (defaults to identity).
    """
    groups = group_split(split) if not isinstance(split, dict) else split
    if len(groups) < 2:
        raise InsufficientData("contrastive sampling needs at least two classes")
    anchors = [(c, i) for c, items in groups.items() if len(items) >= 2 for i in range(len(items))]
    if not anchors:
        raise InsufficientData("no class has two members")
    c, i = anchors[rng.below(len(anchors))]
    mates = groups[c]
    j = rng.below(len(mates) - 1)
    if j >= i:
        j += 1
    others = [item for oc, items in groups.items() if oc != c for item in items]
    if len(others) < N:
        raise InsufficientData(f"{len(others)} negatives available, need {N}")
    negs = tuple(rng.sample(others, N))
    return ContrastiveBatch(mates[i], mates[j], negs, t)


class PreparedContrastive:
    """Index form of several contrastive batches over one set of sequences."""

    def __init__(self, seqs, q_idx, p_idx, n_idx, V):
        self.seqs = seqs
        self.q = np.asarray(q_idx)
        self.p = np.asarray(p_idx)
        self.n = np.asarray(n_idx)
        self.M = pooling_matrix(seqs, V)


class ContrastiveObjective:
    """Mean InfoNCE over prepared batches, on unit-normalized embeddings."""

    def __init__(self, cfg: EncoderConfig, temperature: float = DEFAULT_TEMPERATURE, num_negatives: int = DEFAULT_NEGATIVES):
        if temperature <= 0:
            raise NonPositiveTemperature(f"temperature must be > 0, got {temperature}")
        self.cfg = cfg
        self.t = temperature
        self.N = num_negatives

    def prepare_from(self, items: Sequence, n_batches: int, rng: Xoshiro256) -> PreparedContrastive:
        groups = group_split(items)
        batches = [sample_contrastive_batch(groups, self.N, rng, self.t) for _ in range(n_batches)]
        return self.prepare(batches)

    def prepare(self, batches) -> PreparedContrastive:
        if isinstance(batches, PreparedContrastive):
            return batches
        index: dict[int, int] = {}
        seqs = []

        def slot(seq):
            if id(seq) not in index:
                index[id(seq)] = len(seqs)
                seqs.append(seq)
            return index[id(seq)]

        q = [slot(b.query) for b in batches]
        p = [slot(b.positive) for b in batches]
        n = [[slot(x) for x in b.negatives] for b in batches]
        return PreparedContrastive(seqs, q, p, n, self.cfg.V)

    def _scores(self, theta, batch):
        out, cache = forward(theta, self.cfg, batch.M)
        U, norms = unit_rows(out)
        return out, cache, U, norms

    def loss_and_grad(self, theta, batch):
        out, cache, U, norms = self._scores(theta, batch)
        dU = np.zeros_like(U)
        total = 0.0
        B = len(batch.q)
        for q, p, negs in zip(batch.q, batch.p, batch.n):
            loss, dq, dp, dn = infonce_loss(U[q], U[p], U[negs], self.t)
            total += loss
            dU[q] += dq / B
            dU[p] += dp / B
            np.add.at(dU, negs, dn / B)
        # through u = e / |e|
        d_out = (dU - U * np.sum(dU * U, axis=1, keepdims=True)) / norms[:, None]
        grad = backward(theta, self.cfg, cache, d_out)
        return total / B, grad

    def accuracy(self, theta, batch) -> float:
        """Fraction of batches whose positive outscores every negative."""
        _, _, U, _ = self._scores(theta, batch)
        hits = 0
        for q, p, negs in zip(batch.q, batch.p, batch.n):
            hits += bool(U[q] @ U[p] > np.max(U[negs] @ U[q]))
        return hits / len(batch.q)


def meta_step_contrastive(params, tasks, cfg: MamlConfig, t: float | None = None, N: int | None = None):
    """Meta-step with cross-entropy inner loop and InfoNCE query loss.

    ``tasks`` carry pair batches as ``support`` and prepared contrastive
    batches (see :meth:`ContrastiveObjective.prepare_from`) as ``query``.
    """
    t = cfg.temperature if t is None else t
    N = cfg.num_negatives if N is None else N
    objective = PairObjective(params.config)
    query_objective = ContrastiveObjective(params.config, t, N)
    return meta_step(params, tasks, cfg, objective, query_objective)
