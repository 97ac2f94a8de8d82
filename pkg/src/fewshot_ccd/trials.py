"""Synthetic end-to-end protocols shared by the acceptance tests and scripts/."""

from __future__ import annotations

import json
import math
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, FinetuneConfig
from .contrastive import ContrastiveObjective, meta_step_contrastive
from .encoder import EncoderConfig, TokenCache, init_params
from .episodes import group_split
from .experiment import run_experiment
from .meta import MamlConfig, episode_task
from .rng import Xoshiro256, derive_seed
from .synthetic import SyntheticSpec, generate_corpus

DESK_ENCODER = EncoderConfig(V=1024, d=32, h=64, d_out=32)


def transfer_config(K: int = 10, task: str = "binary") -> ExperimentConfig:
    """Unseen-problem transfer on a 30-problem synthetic corpus: 15 train, 15 target."""
    return ExperimentConfig(
        task=task,
        scenario="I",
        lang="Java",
        shots=[K],
        n_problems=30,
        group_size=15,
        cap=None,
        encoder=DESK_ENCODER,
        maml=MamlConfig(
            alpha=0.05,
            beta=0.05,
            inner_steps=10,
            outer_epochs=10,
            episodes_per_epoch=32,
            meta_batch=4,
            C=5,
            K=5,
            pair_cap=64,
        ),
        finetune=FinetuneConfig(steps=10, lr=0.05, max_pairs=256),
    )


@dataclass
class TransferResult:
    metric: str
    seeds: list[int]
    meta: list[float] = field(default_factory=list)
    random_init: list[float] = field(default_factory=list)
    chance: list[float] = field(default_factory=list)

    @property
    def mean_meta(self) -> float:
        return float(np.mean(self.meta))

    @property
    def mean_random_init(self) -> float:
        return float(np.mean(self.random_init))


def transfer_trials(seeds, noise: float = 0.5, K: int = 10, task: str = "binary", out_dir=None) -> TransferResult:
    """MAML vs an identically fine-tuned random init, one synthetic corpus per seed.

    The seed drives the corpus, the 15/15 problem split, the init and all
    sampling. The random-init arm is the same pipeline with zero meta-epochs.
    """
    cfg = transfer_config(K, task)
    baseline = replace(cfg, maml=replace(cfg.maml, outer_epochs=0))
    key = "f1" if task == "binary" else "map_at_r"
    res = TransferResult(key, list(seeds))
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(out_dir or tmp)
        for seed in res.seeds:
            corpus = generate_corpus(SyntheticSpec(30, 50, noise_rate=noise, seed=seed))
            m = run_experiment(cfg, out / "meta", seeds=[seed], corpus=corpus)[0]
            r = run_experiment(baseline, out / "random", seeds=[seed], corpus=corpus)[0]
            if m["status"] != "ok" or r["status"] != "ok":
                raise RuntimeError(f"seed {seed} failed: {m['error'] or r['error']}")
            res.meta.append(float(m[key]))
            res.random_init.append(float(r[key]))
            if task == "retrieval":
                rep = json.loads((out / "meta" / f"report_SI_g2_K{K}_seed{seed}.json").read_text())
                res.chance.append(float(rep["metric"]["random_baseline"]))
    return res


def contrastive_curve(seed: int, steps: int = 20, noise: float = 0.82, lr: float = 0.001, batches: int = 32) -> np.ndarray:
    """Mean per-task InfoNCE outer loss over ``steps`` contrastive meta-steps.

    Data are near-symmetric for a random encoder: 30 problems x 20
    submissions where most slots hold one shared filler token, so all
    pooled embeddings start close together. The meta-batch (4 episode
    tasks, 16 classes each) is drawn once and reused, so the curve tracks
    optimization rather than task-sampling noise.
    """
    corpus = generate_corpus(SyntheticSpec(30, 20, noise_rate=noise, seed=seed, filler_vocab=1))
    enc = replace(DESK_ENCODER, init_seed=derive_seed(seed, "init") & 0xFFFFFFFF)
    cache = TokenCache(enc)
    items = [(cache(s.submission_id, s.source), s.problem_id) for s in corpus.submissions()]
    groups = group_split(items)
    cfg = MamlConfig(alpha=lr, beta=lr, inner_steps=5, meta_batch=4, C=16, K=5, query_cap=None, pair_cap=64, temperature=0.07, num_negatives=15)
    rng = Xoshiro256(derive_seed(seed, "contrastive"))
    query_objective = ContrastiveObjective(enc, cfg.temperature, cfg.num_negatives)
    tasks = []
    for _ in range(cfg.meta_batch):
        task, ep = episode_task(groups, cfg, rng, enc.V)
        task.query = query_objective.prepare_from(list(ep.query), batches, rng)
        tasks.append(task)
    params = init_params(enc)
    losses = []
    for _ in range(steps):
        params, _, task_losses = meta_step_contrastive(params, tasks, cfg)
        losses.append(float(np.mean(task_losses)))
    return np.array(losses)


def smoothed(x, window: int = 5) -> np.ndarray:
    return np.convolve(np.asarray(x, dtype=np.float64), np.ones(window) / window, mode="valid")


def uniform_infonce(N: int) -> float:
    return math.log(N + 1)
