from __future__ import annotations

import csv
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot_ccd.encoder import EncoderConfig, PairBatch, PairObjective, init_params
from fewshot_ccd.errors import OverlapError
from fewshot_ccd.meta import (
    FIRST_ORDER,
    FULL,
    MamlConfig,
    Task,
    TrainLog,
    finetune,
    inner_update,
    meta_objective,
    meta_step,
    train_maml,
)
from fewshot_ccd.probes import LogisticProbe, QuadraticProbe

ENC = EncoderConfig(V=64, d=4, h=5, d_out=3, init_seed=0)


def _seq_split(rng, n_classes=4, per_class=8, V=64):
    # each class draws from its own token band, so classes are separable
    out = []
    for c in range(n_classes):
        for _ in range(per_class):
            out.append((rng.integers(c * 16, c * 16 + 16, size=6), c))
    return out


def _pair_task(rng, V=64):
    split = _seq_split(rng)
    items = [x for x, _ in split]
    cls = [c for _, c in split]

    def pairs(n):
        out = []
        for _ in range(n):
            i, j = rng.choice(len(items), 2, replace=False)
            out.append((items[i], items[j], cls[i] == cls[j]))
        return PairBatch(out, V)

    return Task(pairs(6), pairs(6))


def _logistic_task(rng, n=12, dim=10):
    def batch():
        X = rng.normal(size=(n, dim))
        return X, (rng.random(n) < 0.5).astype(float)

    return Task(batch(), batch())


def test_inner_update_identities():
    p = init_params(ENC)
    task = _pair_task(np.random.default_rng(0))
    assert inner_update(p, task.support, 0.1, 0) == p
    assert inner_update(p, task.support, 0.0, 5) == p


def test_quadratic_probe_step():
    out = inner_update(np.array([1.0]), None, 0.1, 1, objective=QuadraticProbe())
    assert out[0] == pytest.approx(0.8, abs=1e-15)


@given(st.integers(0, 1000), st.integers(0, 4), st.floats(0, 0.5))
def test_inner_update_does_not_mutate(seed, steps, alpha):
    p = init_params(ENC)
    before = p.theta.copy()
    inner_update(p, _pair_task(np.random.default_rng(seed)).support, alpha, steps)
    np.testing.assert_array_equal(p.theta, before)


def test_zero_inner_steps_modes_agree_with_sgd():
    rng = np.random.default_rng(1)
    p = init_params(ENC)
    tasks = [_pair_task(rng) for _ in range(3)]
    cfg = MamlConfig(alpha=0.1, beta=0.05, inner_steps=0, mode=FIRST_ORDER)
    fo, _, _ = meta_step(p, tasks, cfg)
    full, _, _ = meta_step(p, tasks, replace(cfg, mode=FULL))
    obj = PairObjective(ENC)
    g = sum(obj.loss_and_grad(p.theta, t.query)[1] for t in tasks)
    np.testing.assert_array_equal(fo.theta, full.theta)
    np.testing.assert_array_equal(fo.theta, p.theta - 0.05 * g)


def _fd_meta_grad(theta, tasks, cfg, objective, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (meta_objective(theta + e, tasks, cfg, objective) - meta_objective(theta - e, tasks, cfg, objective)) / (2 * h)
    return g


def _rel(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6))


@pytest.mark.parametrize("seed", range(3))
def test_full_meta_gradient_logistic_probe(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=10)
    tasks = [_logistic_task(rng) for _ in range(2)]
    cfg = MamlConfig(alpha=0.5, beta=1.0, inner_steps=3, mode=FULL)
    probe = LogisticProbe()
    new, _, _ = meta_step(theta, tasks, cfg, probe)
    meta_grad = theta - new
    assert _rel(meta_grad, _fd_meta_grad(theta, tasks, cfg, probe)) < 1e-3
    fo, _, _ = meta_step(theta, tasks, replace(cfg, mode=FIRST_ORDER), probe)
    assert _rel(theta - fo, meta_grad) > 1e-3


def test_full_meta_gradient_small_encoder():
    rng = np.random.default_rng(4)
    cfg_enc = EncoderConfig(V=16, d=2, h=2, d_out=2, init_seed=3)
    theta = init_params(cfg_enc).theta
    split = [(rng.integers(0, 16, size=4), c) for c in range(2) for _ in range(3)]
    pairs = [(a, b, ca == cb) for (a, ca), (b, cb) in zip(split, split[1:] + split[:1])]
    task = Task(PairBatch(pairs, 16), PairBatch(pairs[::-1], 16))
    obj = PairObjective(cfg_enc)
    cfg = MamlConfig(alpha=0.1, beta=1.0, inner_steps=2, mode=FULL)
    new, _, _ = meta_step(theta, [task], cfg, obj)
    assert _rel(theta - new, _fd_meta_grad(theta, [task], cfg, obj)) < 1e-3


@given(st.integers(0, 500))
def test_meta_update_magnitude_bound(seed):
    rng = np.random.default_rng(seed)
    p = init_params(ENC)
    tasks = [_pair_task(rng) for _ in range(2)]
    cfg = MamlConfig(alpha=0.1, beta=0.05, inner_steps=2)
    new, _, _ = meta_step(p, tasks, cfg)
    obj = PairObjective(ENC)
    norms = sum(np.linalg.norm(obj.loss_and_grad(inner_update(p, t.support, 0.1, 2).theta, t.query)[1]) for t in tasks)
    assert np.linalg.norm(new.theta - p.theta) <= 0.05 * norms + 1e-12


def test_first_order_meta_loss_decreases():
    rng = np.random.default_rng(7)
    task = _pair_task(rng)
    p = init_params(ENC)
    cfg = MamlConfig(alpha=0.05, beta=0.05, inner_steps=2)
    losses = []
    for _ in range(50):
        p, outer, _ = meta_step(p, [task], cfg)
        losses.append(outer)
    assert np.mean(losses[-5:]) < np.mean(losses[:5])


def _token_split(seed=0):
    rng = np.random.default_rng(seed)
    return _seq_split(rng, n_classes=4, per_class=10)


def test_train_maml_zero_episodes():
    cfg = MamlConfig(episodes_per_epoch=0)
    p, log = train_maml(_token_split(), cfg, ENC)
    assert p == init_params(ENC) and len(log) == 0


def test_train_maml_deterministic(tmp_path):
    cfg = MamlConfig(alpha=0.05, beta=0.05, inner_steps=2, outer_epochs=2, episodes_per_epoch=4, meta_batch=2, C=2, K=3)
    a, log_a = train_maml(_token_split(), cfg, ENC)
    b, _ = train_maml(_token_split(), cfg, ENC)
    assert a.theta.tobytes() == b.theta.tobytes()
    assert len(log_a) == 4
    log_a.write_csv(tmp_path / "log.csv")
    with open(tmp_path / "log.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["meta_step", "outer_loss", "mean_task_loss", "seconds"]
    assert len(rows) == 5


def test_train_maml_infonce_runs():
    cfg = MamlConfig(alpha=0.01, beta=0.01, inner_steps=1, outer_epochs=1, episodes_per_epoch=2, meta_batch=2, C=3, K=2, num_negatives=4, objective="infonce")
    p, log = train_maml(_token_split(), cfg, ENC)
    assert len(log) == 1 and np.all(np.isfinite(p.theta))


def test_finetune_identity_and_overlap():
    p = init_params(ENC)
    task = _pair_task(np.random.default_rng(0))
    assert finetune(p, task.support, 0, 0.1) == p
    with pytest.raises(OverlapError):
        finetune(p, task.support, 1, 0.1, support_ids=["a", "b"], test_ids=["b"])


def test_config_parsing():
    cfg = MamlConfig.from_dict({"alpha": 0.1, "beta": 0.1, "mode": "full"})
    assert cfg.mode == FULL
    with pytest.raises(ValueError):
        MamlConfig.from_dict({"gamma": 1})
    with pytest.raises(ValueError):
        MamlConfig(mode="third")


def test_trainlog_mean():
    log = TrainLog()
    log.append(3.0, [1.0, 2.0], 0.1)
    assert log.steps[0]["mean_task_loss"] == 1.5
