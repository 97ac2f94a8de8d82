"""Train / fine-tune / evaluate cells of the scenario matrix."""

from __future__ import annotations

import csv
import json
import logging
import math
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import ExperimentConfig
from .corpus import Corpus, load_corpus, load_store
from .datasets import (
    PairRecord,
    ScenarioManifest,
    load_external_train,
    sample_balanced_pairs,
    split_scenario1,
    split_scenario2,
    split_scenario3,
)
from .encoder import EncoderConfig, PairBatch, PairObjective, Params, TokenCache, embed_many, init_params, pair_probabilities
from .episodes import group_split
from .errors import CCDError, InsufficientPairs
from .meta import FIRST_ORDER, Task, TrainLog, finetune, meta_step, support_pairs, train_maml, train_supervised
from .metrics import confusion, f1, map_at_r, random_map_at_r, retrieval_run
from .rng import Xoshiro256, derive_seed

log = logging.getLogger(__name__)

AGGREGATE_COLUMNS = [
    "task",
    "scenario",
    "train_lang",
    "eval_lang",
    "group_id",
    "K",
    "seed",
    "status",
    "f1",
    "precision",
    "recall",
    "map_at_r",
    "error",
]


def load_experiment_corpus(cfg: ExperimentConfig) -> Corpus:
    if cfg.store:
        return load_store(cfg.store)
    if cfg.corpus_root and cfg.metadata:
        return load_corpus(cfg.corpus_root, cfg.metadata)
    raise ValueError("config needs either 'store' or 'corpus_root' + 'metadata'")


def make_manifests(cfg: ExperimentConfig, corpus: Corpus, seed: int) -> list[ScenarioManifest]:
    if cfg.scenario == "I":
        return split_scenario1(corpus, cfg.lang, cfg.shots, seed, cfg.n_problems, cfg.group_size, cfg.cap)
    if cfg.scenario == "II":
        return [split_scenario2(corpus, cfg.train_lang, cfg.eval_lang, K, seed, cap=cfg.cap) for K in cfg.shots]
    return [split_scenario3(cfg.train_dataset, corpus, cfg.eval_lang, K, seed, cap=cfg.cap) for K in cfg.shots]


class Workspace:
    """Corpus lookup plus a token cache shared across cells."""

    def __init__(self, corpus: Corpus, enc: EncoderConfig):
        self.corpus = corpus
        self.enc = enc
        self.cache = TokenCache(enc)
        self.by_id = {s.submission_id: s for s in corpus.submissions()}
        self.external_kind: dict[str, str] = {}

    def items(self, ids: Iterable[str]) -> list[tuple[np.ndarray, str]]:
        out = []
        for sid in ids:
            s = self.by_id[sid]
            out.append((self.cache(sid, s.source), s.problem_id))
        return out

    def external_items(self, path):
        """Training material from an external JSONL: ``("pairs", [...])`` or ``("split", [...])``."""
        kind, records = load_external_train(path)
        self.external_kind[str(path)] = kind
        if kind == "pair":
            pairs = []
            for r in records:
                a = self.cache(f"ext:{r.id1}", r.func1)
                b = self.cache(f"ext:{r.id2}", r.func2)
                if len(a) and len(b):
                    pairs.append((a, b, r.label))
            return "pairs", pairs
        return "split", [(self.cache(f"ext:{r.id}", r.code), r.label) for r in records if r.code.strip()]


def _pair_tasks(pairs, cfg, rng, V):
    n_sup = max(2, cfg.C * cfg.K)
    n_qry = cfg.query_cap or 32
    idx = rng.sample_indices(len(pairs), min(len(pairs), n_sup + n_qry))
    sup = [pairs[i] for i in idx[:n_sup]]
    qry = [pairs[i] for i in idx[n_sup:]] or sup
    return Task(PairBatch(sup, V), PairBatch(qry, V))


def train_maml_on_pairs(pairs, mcfg, enc: EncoderConfig):
    """MAML where each task is a random support/query draw of labeled pairs."""
    params = init_params(enc)
    tlog = TrainLog()
    rng = Xoshiro256(mcfg.seed)
    objective = PairObjective(enc)
    per_epoch = math.ceil(mcfg.episodes_per_epoch / mcfg.meta_batch) if mcfg.episodes_per_epoch else 0
    for _ in range(mcfg.outer_epochs):
        for _ in range(per_epoch):
            tasks = [_pair_tasks(pairs, mcfg, rng, enc.V) for _ in range(mcfg.meta_batch)]
            params, outer, losses = meta_step(params, tasks, mcfg, objective)
            tlog.append(outer, losses, 0.0)
    return params, tlog


def train_for_manifest(cfg: ExperimentConfig, ws: Workspace, manifest: ScenarioManifest, seed: int, no_meta: bool, objective: str):
    enc = replace(cfg.encoder, init_seed=derive_seed(seed, "init") & 0xFFFFFFFF)
    mcfg = replace(cfg.maml, seed=derive_seed(seed, "train"), objective=objective)
    if manifest.train_path:
        kind, material = ws.external_items(manifest.train_path)
    else:
        kind, material = "split", ws.items(manifest.train)
    n_meta = mcfg.outer_epochs * math.ceil(mcfg.episodes_per_epoch / mcfg.meta_batch) if mcfg.episodes_per_epoch else 0
    if no_meta:
        steps = cfg.supervised_steps if cfg.supervised_steps is not None else n_meta
        if kind == "split":
            return train_supervised(material, steps, mcfg.beta, enc, seed=mcfg.seed), TrainLog()
        params = init_params(enc)
        rng = Xoshiro256(mcfg.seed)
        objective_fn = PairObjective(enc)
        theta = params.theta.copy()
        for _ in range(steps):
            idx = rng.sample_indices(len(material), min(64, len(material)))
            _, g = objective_fn.loss_and_grad(theta, PairBatch([material[i] for i in idx], enc.V))
            theta = theta - mcfg.beta * g
        return Params(enc, theta), TrainLog()
    if kind == "split":
        return train_maml(material, mcfg, enc)
    return train_maml_on_pairs(material, mcfg, enc)


def finetune_for_manifest(cfg: ExperimentConfig, ws: Workspace, params: Params, manifest: ScenarioManifest, seed: int) -> Params:
    manifest.check()
    rng = Xoshiro256(derive_seed(seed, "finetune", manifest.group_id, manifest.K))
    support = ws.items(manifest.support)
    pairs = support_pairs(support, rng, cfg.finetune.max_pairs)
    if not pairs:
        raise InsufficientPairs("support set yields no balanced pairs")
    return finetune(params, pairs, cfg.finetune.steps, cfg.finetune.lr, manifest.support, manifest.test)


def evaluate_binary(params: Params, test_items, n_pairs: int, rng: Xoshiro256) -> dict:
    groups = list(group_split(test_items).values())
    n_pos = sum(len(g) * (len(g) - 1) // 2 for g in groups)
    sizes = [len(g) for g in groups]
    n_neg = (sum(sizes) ** 2 - sum(n * n for n in sizes)) // 2
    n_each = min(n_pairs // 2, n_pos, n_neg)
    if n_each == 0:
        raise InsufficientPairs("test split yields no balanced pairs")
    pairs = sample_balanced_pairs(groups, n_each, rng)
    prob = pair_probabilities(params, PairBatch(pairs, params.config.V))
    precision, recall, score = f1(confusion(prob >= 0.5, [y for _, _, y in pairs]))
    return {"f1": score, "precision": precision, "recall": recall, "n_pairs": len(pairs)}


def evaluate_retrieval(params: Params, test_items, ids, R: int | None = None) -> dict:
    E = embed_many(params, [x for x, _ in test_items])
    labels = [c for _, c in test_items]
    run = retrieval_run(E, labels, ids, R)
    return {
        "map_at_r": map_at_r(run),
        "R": "relevant-set size" if R is None else f"min({R}, relevant-set size)",
        "random_baseline": random_map_at_r(labels, R),
        "n_queries": len(run.queries),
    }


def evaluate_manifest(cfg: ExperimentConfig, ws: Workspace, params: Params, manifest: ScenarioManifest, seed: int) -> dict:
    test = ws.items(manifest.test)
    if cfg.task == "binary":
        rng = Xoshiro256(derive_seed(seed, "eval", manifest.group_id, manifest.K))
        return evaluate_binary(params, test, cfg.eval_pairs, rng)
    return evaluate_retrieval(params, test, manifest.test, cfg.map_r)


def make_report(cfg: ExperimentConfig, manifest: ScenarioManifest, seed: int, metric: dict, no_meta: bool, objective: str, extra_note: str = "") -> dict:
    return {
        "task": cfg.task,
        "scenario": manifest.scenario,
        "train_lang": manifest.train_lang,
        "eval_lang": manifest.eval_lang,
        "group_id": manifest.group_id,
        "K": manifest.K,
        "seed": seed,
        "metric": metric,
        "config_hash": cfg.config_hash(),
        "training": "conventional" if no_meta else "maml",
        "objective": objective,
        "maml_mode": cfg.maml.mode,
        "notes": "; ".join(
            n
            for n in (
                "first-order MAML: meta-gradient taken at the adapted parameters" if cfg.maml.mode == FIRST_ORDER and not no_meta else "",
                extra_note,
            )
            if n
        ),
    }


def report_filename(rep: dict) -> str:
    return f"report_S{rep['scenario']}_g{rep['group_id']}_K{rep['K']}_seed{rep['seed']}.json"


def _aggregate_row(rep: dict, status: str = "ok", error: str = "") -> dict:
    m = rep.get("metric") or {}
    return {
        "task": rep["task"],
        "scenario": rep["scenario"],
        "train_lang": rep["train_lang"],
        "eval_lang": rep["eval_lang"],
        "group_id": rep["group_id"],
        "K": rep["K"],
        "seed": rep["seed"],
        "status": status,
        "f1": m.get("f1", ""),
        "precision": m.get("precision", ""),
        "recall": m.get("recall", ""),
        "map_at_r": m.get("map_at_r", ""),
        "error": error,
    }


def _training_note(ws: Workspace, m: ScenarioManifest, no_meta: bool, objective: str) -> str:
    if objective == "infonce" and not no_meta and m.train_path and ws.external_kind.get(str(m.train_path)) == "pair":
        return "infonce objective ignored: pair-labeled training data has no classes, cross-entropy used"
    return ""


def run_experiment(cfg: ExperimentConfig, out_dir, no_meta: bool | None = None, objective: str | None = None, seeds=None, corpus: Corpus | None = None) -> list[dict]:
    """Run every (manifest, seed) cell; returns aggregate rows.

    A failing cell is recorded with ``status=failed`` and the rest continue.
    Writes one report JSON per successful cell and ``aggregate.csv``.
    """
    no_meta = cfg.no_meta if no_meta is None else no_meta
    objective = objective or cfg.maml.objective
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = corpus if corpus is not None else load_experiment_corpus(cfg)
    ws = Workspace(corpus, cfg.encoder)
    rows = []
    for seed in seeds if seeds is not None else cfg.seeds:
        manifests = make_manifests(cfg, corpus, seed)
        trained: dict[tuple, Params] = {}
        for m in manifests:
            try:
                key = (tuple(m.train), m.train_path)
                if key not in trained:
                    trained[key], tlog = train_for_manifest(cfg, ws, m, seed, no_meta, objective)
                    if len(tlog):
                        tlog.write_csv(out / f"trainlog_S{m.scenario}_seed{seed}.csv")
                tuned = finetune_for_manifest(cfg, ws, trained[key], m, seed)
                metric = evaluate_manifest(cfg, ws, tuned, m, seed)
                rep = make_report(cfg, m, seed, metric, no_meta, objective, _training_note(ws, m, no_meta, objective))
                (out / report_filename(rep)).write_text(json.dumps(rep, indent=1) + "\n", encoding="utf-8")
                rows.append(_aggregate_row(rep))
            except (CCDError, ValueError, FloatingPointError) as exc:
                log.warning("cell S%s g%s K%s seed %s failed: %s", m.scenario, m.group_id, m.K, seed, exc)
                rep = make_report(cfg, m, seed, {}, no_meta, objective)
                rows.append(_aggregate_row(rep, "failed", f"{type(exc).__name__}: {exc}"))
                log.debug(traceback.format_exc())
    rows.sort(key=lambda r: (r["scenario"], r["group_id"], r["K"], r["seed"]))
    write_aggregate(rows, out / "aggregate.csv")
    return rows


def write_aggregate(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def read_aggregate(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def best_shot(rows) -> dict:
    """Shot count with the highest mean F1 (ties -> smaller K)."""
    by_k: dict[int, list[float]] = {}
    for r in rows:
        if r.get("status", "ok") != "ok" or r.get("f1") in ("", None):
            continue
        by_k.setdefault(int(r["K"]), []).append(float(r["f1"]))
    if not by_k:
        raise ValueError("no successful binary cells to choose from")
    means = {k: float(np.mean(v)) for k, v in sorted(by_k.items())}
    best = max(sorted(means), key=lambda k: (means[k], -k))
    return {"best_K": best, "mean_f1_by_K": means}
