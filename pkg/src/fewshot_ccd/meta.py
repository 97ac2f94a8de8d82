"""MAML meta-training (first-order by default) and plain fine-tuning.

The learners work on flat parameter vectors through an *objective*: any
object with ``loss_and_grad(theta, batch)`` and, for full second-order
MAML, ``hvp(theta, batch, v)``. :class:`~fewshot_ccd.encoder.PairObjective`
is the encoder's cross-entropy objective; the probes in
:mod:`fewshot_ccd.probes` are small exact models used for checking.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

from .encoder import EncoderConfig, PairBatch, PairObjective, Params, init_params
from .episodes import group_split, pairs_from_episode, sample_episode
from .datasets import sample_balanced_pairs
from .errors import OverlapError
from .rng import Xoshiro256

FIRST_ORDER = "FirstOrder"
FULL = "Full"


def _mode(name: str) -> str:
    key = name.replace("_", "").replace("-", "").lower()
    if key in ("firstorder", "fo", "fomaml"):
        return FIRST_ORDER
    if key in ("full", "secondorder"):
        return FULL
    raise ValueError(f"unknown MAML mode {name!r}")


@dataclass
class MamlConfig:
    alpha: float = 5e-5
    beta: float = 5e-5
    inner_steps: int = 10
    outer_epochs: int = 10
    episodes_per_epoch: int = 16
    meta_batch: int = 4
    mode: str = FIRST_ORDER
    seed: int = 0
    C: int = 2
    K: int = 5
    query_cap: int | None = 32
    pair_cap: int | None = 64
    objective: str = "ce"
    temperature: float = 0.07
    num_negatives: int = 15
    contrastive_batches: int = 8

    def __post_init__(self):
        self.mode = _mode(self.mode)
        if self.alpha < 0 or self.beta <= 0:
            raise ValueError("learning rates must be positive")
        if self.inner_steps < 0 or self.outer_epochs < 0 or self.episodes_per_epoch < 0:
            raise ValueError("step counts must be >= 0")
        if self.meta_batch < 1:
            raise ValueError("meta_batch must be >= 1")
        if self.objective not in ("ce", "infonce"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "MamlConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Task:
    support: Any
    query: Any


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    wall_time: float = 0.0

    def append(self, outer_loss: float, task_losses: Sequence[float], seconds: float) -> None:
        self.steps.append(
            {
                "meta_step": len(self.steps),
                "outer_loss": float(outer_loss),
                "task_losses": [float(x) for x in task_losses],
                "mean_task_loss": float(np.mean(task_losses)),
                "seconds": float(seconds),
            }
        )

    def __len__(self) -> int:
        return len(self.steps)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["meta_step", "outer_loss", "mean_task_loss", "seconds"])
            for s in self.steps:
                w.writerow([s["meta_step"], repr(s["outer_loss"]), repr(s["mean_task_loss"]), f"{s['seconds']:.6f}"])


def _unwrap(params):
    if isinstance(params, Params):
        return params.theta, params.config
    return np.asarray(params, dtype=np.float64), None


def _wrap(theta, cfg):
    return Params(cfg, theta) if cfg is not None else theta


def _default_objective(cfg, objective):
    if objective is not None:
        return objective
    if cfg is None:
        raise TypeError("an objective is required for raw parameter vectors")
    return PairObjective(cfg)


def _inner(theta, support, alpha, steps, objective, keep=False):
    traj = []
    for _ in range(steps):
        if keep:
            traj.append(theta)
        _, g = objective.loss_and_grad(theta, support)
        theta = theta - alpha * g
    return theta, traj


def inner_update(params, support, alpha: float, steps: int, objective=None):
    """Task adaptation: ``steps`` SGD steps on the support loss.

    Returns new parameters; the input is never modified.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    theta, cfg = _unwrap(params)
    objective = _default_objective(cfg, objective)
    if hasattr(objective, "prepare"):
        support = objective.prepare(support)
    adapted, _ = _inner(theta.copy(), support, alpha, steps, objective)
    return _wrap(adapted, cfg)


def task_meta_gradient(theta, task: Task, cfg: MamlConfig, objective, query_objective=None):
    """Query loss at the adapted parameters and its meta-gradient w.r.t. ``theta``.

    First-order mode returns the query gradient at the adapted point. Full
    mode back-propagates it through each inner step: ``v <- v - alpha * H_k v``.
    """
    query_objective = query_objective or objective
    full = cfg.mode == FULL and cfg.inner_steps > 0
    adapted, traj = _inner(theta, task.support, cfg.alpha, cfg.inner_steps, objective, keep=full)
    loss, v = query_objective.loss_and_grad(adapted, task.query)
    if full:
        for th in reversed(traj):
            v = v - cfg.alpha * objective.hvp(th, task.support, v)
    return loss, v


def meta_objective(theta, tasks, cfg: MamlConfig, objective, query_objective=None) -> float:
    """Summed post-adaptation query loss (the quantity full MAML differentiates)."""
    query_objective = query_objective or objective
    total = 0.0
    for task in tasks:
        adapted, _ = _inner(theta, task.support, cfg.alpha, cfg.inner_steps, objective)
        total += query_objective.loss_and_grad(adapted, task.query)[0]
    return total


def meta_step(params, tasks: Sequence[Task], cfg: MamlConfig, objective=None, query_objective=None):
    """One outer update ``theta <- theta - beta * sum_i grad L_i(theta'_i)``.

    Returns ``(new_params, outer_loss, task_losses)`` where ``outer_loss`` is
    the summed query loss. Tasks are reduced in list order.
    """
    if not tasks:
        raise ValueError("meta_step needs at least one task")
    theta, ecfg = _unwrap(params)
    objective = _default_objective(ecfg, objective)
    total = np.zeros_like(theta)
    losses = []
    for task in tasks:
        loss, g = task_meta_gradient(theta, task, cfg, objective, query_objective)
        total += g
        losses.append(loss)
    return _wrap(theta - cfg.beta * total, ecfg), float(sum(losses)), losses


# --------------------------------------------------------------------------
# episodic training on token splits


def episode_task(split_groups: dict, cfg: MamlConfig, rng: Xoshiro256, V: int) -> tuple[Task, Any]:
    """Sample an episode and turn it into a cross-entropy pair task."""
    ep = sample_episode(split_groups, cfg.C, cfg.K, rng, cfg.query_cap)
    sup, qry = pairs_from_episode(ep, rng, cfg.pair_cap)
    return Task(PairBatch(sup, V), PairBatch(qry, V)), ep


def train_maml(split, cfg: MamlConfig, enc_cfg: EncoderConfig, init: Params | None = None, logger=None):
    """Meta-train an encoder on ``split`` (a list of ``(token_ids, class)``).

    With ``cfg.objective == "infonce"`` the query loss is InfoNCE over
    contrastive batches drawn from each episode's query set.
    """
    params = init.copy() if init is not None else init_params(enc_cfg)
    log = TrainLog()
    if cfg.episodes_per_epoch == 0 or cfg.outer_epochs == 0:
        return params, log
    groups = group_split(split)
    rng = Xoshiro256(cfg.seed)
    objective = PairObjective(enc_cfg)
    query_objective = None
    if cfg.objective == "infonce":
        from .contrastive import ContrastiveObjective

        query_objective = ContrastiveObjective(enc_cfg, cfg.temperature, cfg.num_negatives)
    t0 = time.perf_counter()
    per_epoch = math.ceil(cfg.episodes_per_epoch / cfg.meta_batch)
    for epoch in range(cfg.outer_epochs):
        remaining = cfg.episodes_per_epoch
        for _ in range(per_epoch):
            n = min(cfg.meta_batch, remaining)
            remaining -= n
            tasks = []
            for _ in range(n):
                task, ep = episode_task(groups, cfg, rng, enc_cfg.V)
                if query_objective is not None:
                    task.query = query_objective.prepare_from(list(ep.query), cfg.contrastive_batches, rng)
                tasks.append(task)
            ts = time.perf_counter()
            params, outer, losses = meta_step(params, tasks, cfg, objective, query_objective)
            log.append(outer, losses, time.perf_counter() - ts)
            if logger is not None:
                logger(epoch, len(log), outer)
    log.wall_time = time.perf_counter() - t0
    return params, log


def sgd(params, batch, steps: int, lr: float, objective=None):
    theta, cfg = _unwrap(params)
    objective = _default_objective(cfg, objective)
    if hasattr(objective, "prepare"):
        batch = objective.prepare(batch)
    theta = theta.copy()
    for _ in range(steps):
        _, g = objective.loss_and_grad(theta, batch)
        theta = theta - lr * g
    return _wrap(theta, cfg)


def finetune(params, support, steps: int, lr: float, support_ids=None, test_ids=None, objective=None):
    """Plain SGD on the support pairs.

    Passing ``support_ids``/``test_ids`` enforces that no support
    submission is also a test submission.
    """
    if support_ids is not None and test_ids is not None:
        clash = set(support_ids) & set(test_ids)
        if clash:
            raise OverlapError(f"{len(clash)} support submissions also appear in the test split")
    return sgd(params, support, steps, lr, objective)


def support_pairs(items, rng: Xoshiro256, max_pairs: int | None = 256):
    """Balanced labeled pairs from few-shot support ``(token_ids, class)`` items."""
    groups = list(group_split(items).values())
    n_pos = sum(len(g) * (len(g) - 1) // 2 for g in groups)
    sizes = [len(g) for g in groups]
    n_neg = (sum(sizes) ** 2 - sum(n * n for n in sizes)) // 2
    n = min(n_pos, n_neg)
    if max_pairs is not None:
        n = min(n, max_pairs // 2)
    return sample_balanced_pairs(groups, n, rng)


def train_supervised(split, steps: int, lr: float, enc_cfg: EncoderConfig, seed: int = 0, batch_pairs: int = 64, init: Params | None = None):
    """Conventional (non-meta) training: SGD on balanced pairs from the whole split."""
    params = init.copy() if init is not None else init_params(enc_cfg)
    groups = list(group_split(split).values())
    rng = Xoshiro256(seed)
    objective = PairObjective(enc_cfg)
    theta = params.theta.copy()
    for _ in range(steps):
        batch = PairBatch(sample_balanced_pairs(groups, batch_pairs // 2, rng), enc_cfg.V)
        _, g = objective.loss_and_grad(theta, batch)
        theta = theta - lr * g
    return Params(enc_cfg, theta)
