from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fewshot_ccd.contrastive import (
    ContrastiveObjective,
    infonce_loss,
    meta_step_contrastive,
    sample_contrastive_batch,
)
from fewshot_ccd.encoder import EncoderConfig, PairBatch, init_params
from fewshot_ccd.errors import InsufficientData, NoNegatives, NonPositiveTemperature
from fewshot_ccd.meta import MamlConfig, Task, sgd
from fewshot_ccd.rng import Xoshiro256


def naive_infonce(q, kp, kn, t):
    num = math.exp(np.dot(q, kp) / t)
    den = num + sum(math.exp(np.dot(q, k) / t) for k in kn)
    return -math.log(num / den)


def test_uniform_case_ln5():
    q = np.array([1.0, 0.0])
    keys = np.tile([0.3, 0.2], (5, 1))
    loss, *_ = infonce_loss(q, keys[0], keys[1:], 0.07)
    assert loss == pytest.approx(math.log(5), abs=1e-12)


def test_hand_value():
    # q.k+/t = 2, q.k-/t = 0
    loss, *_ = infonce_loss(np.array([1.0]), np.array([2.0]), np.array([[0.0]]), 1.0)
    assert loss == pytest.approx(0.126928, abs=1e-6)
    assert loss == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-15)


def test_errors():
    with pytest.raises(NonPositiveTemperature):
        infonce_loss([1.0], [1.0], [[1.0]], 0.0)
    with pytest.raises(NoNegatives):
        infonce_loss([1.0], [1.0], np.zeros((0, 1)), 0.1)


def test_large_logits_stable():
    loss, dq, *_ = infonce_loss(np.array([1.0]), np.array([500.0]), np.array([[-500.0]]), 0.01)
    assert np.isfinite(loss) and np.all(np.isfinite(dq))


def _fd(f, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel(a, b):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6))


@pytest.mark.parametrize("seed", range(5))
def test_infonce_gradients(seed):
    rng = np.random.default_rng(seed)
    q, kp, kn = rng.normal(size=4), rng.normal(size=4), rng.normal(size=(3, 4))
    t = 0.5
    _, dq, dkp, dkn = infonce_loss(q, kp, kn, t)
    assert _rel(dq, _fd(lambda x: infonce_loss(x, kp, kn, t)[0], q)) < 1e-4
    assert _rel(dkp, _fd(lambda x: infonce_loss(q, x, kn, t)[0], kp)) < 1e-4
    assert _rel(dkn, _fd(lambda x: infonce_loss(q, kp, x, t)[0], kn)) < 1e-4
    assert infonce_loss(q, kp, kn, t)[0] == pytest.approx(naive_infonce(q, kp, kn, t), rel=1e-12)


small = st.floats(-3, 3, allow_nan=False)


@given(st.lists(small, min_size=3, max_size=3), st.lists(small, min_size=3, max_size=3), st.lists(st.lists(small, min_size=3, max_size=3), min_size=1, max_size=4), st.floats(0.1, 5))
def test_infonce_properties(q, kp, kn, t):
    q, kp, kn = np.array(q), np.array(kp), np.array(kn)
    loss = infonce_loss(q, kp, kn, t)[0]
    assert loss >= 0
    # raising q.k+ lowers the loss; raising any q.k- raises it
    if q @ q < 1e-6:
        return
    step = 0.5 * t * q / (q @ q)  # moves the dot product by 0.5 * t
    up = infonce_loss(q, kp + step, kn, t)[0]
    kn2 = kn.copy()
    kn2[0] += step
    down = infonce_loss(q, kp, kn2, t)[0]
    assert up <= loss and down >= loss
    z = np.concatenate([[q @ kp], kn @ q]) / t
    w = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    if 1 - w[0] > 1e-9:
        assert up < loss
    if w[1] > 1e-9:
        assert down > loss


@given(st.integers(1, 8), st.floats(0.01, 10))
def test_equal_logits_t_invariant(n, t):
    q = np.array([0.6, 0.8])
    keys = np.tile(q, (n + 1, 1))
    assert infonce_loss(q, keys[0], keys[1:], t)[0] == pytest.approx(math.log(n + 1), rel=1e-12)


def test_sampling_exhaustion():
    split = [("a1", "A"), ("a2", "A"), ("b1", "B"), ("b2", "B")]
    b = sample_contrastive_batch(split, 2, Xoshiro256(0))
    own = "A" if b.query.startswith("a") else "B"
    assert set(b.negatives) == {x for x, c in split if c != own}
    with pytest.raises(InsufficientData):
        sample_contrastive_batch([("a1", "A"), ("a2", "A")], 1, Xoshiro256(0))


def test_sampling_law_10k():
    split = [(f"{c}{i}", c) for c in "ABCDE" for i in range(4)] + [("F0", "F")]
    cls = dict(split)
    rng = Xoshiro256(9)
    for _ in range(10000):
        b = sample_contrastive_batch(split, 5, rng)
        c = cls[b.query]
        assert b.query != b.positive and cls[b.positive] == c
        assert len(set(b.negatives)) == 5
        assert all(cls[n] != c for n in b.negatives)


ENC = EncoderConfig(V=64, d=4, h=5, d_out=3, init_seed=0)


def _items(rng, n_classes=4, per=6):
    return [(rng.integers(c * 16, c * 16 + 16, size=5), c) for c in range(n_classes) for _ in range(per)]


@pytest.mark.parametrize("seed", range(3))
def test_objective_gradient(seed):
    rng = np.random.default_rng(seed)
    obj = ContrastiveObjective(ENC, temperature=0.5, num_negatives=3)
    batch = obj.prepare_from(_items(rng), 3, Xoshiro256(seed))
    theta = init_params(ENC).theta + 0.1 * rng.normal(size=ENC.size)
    _, g = obj.loss_and_grad(theta, batch)
    assert _rel(g, _fd(lambda t: obj.loss_and_grad(t, batch)[0], theta)) < 1e-4


def test_meta_step_contrastive_zero_inner_is_sgd():
    rng = np.random.default_rng(0)
    items = _items(rng)
    obj = ContrastiveObjective(ENC, 0.5, 3)
    p = init_params(ENC)
    pairs = [(items[0][0], items[1][0], True), (items[0][0], items[7][0], False)]
    task = Task(PairBatch(pairs, ENC.V), obj.prepare_from(items, 2, Xoshiro256(1)))
    cfg = MamlConfig(alpha=0.1, beta=0.05, inner_steps=0, temperature=0.5, num_negatives=3)
    new, _, _ = meta_step_contrastive(p, [task], cfg)
    ref = sgd(p, task.query, 1, 0.05, objective=obj)
    np.testing.assert_array_equal(new.theta, ref.theta)
    again, _, _ = meta_step_contrastive(p, [task], cfg)
    np.testing.assert_array_equal(new.theta, again.theta)


def test_accuracy_in_unit_interval():
    rng = np.random.default_rng(2)
    obj = ContrastiveObjective(ENC, 0.1, 3)
    batch = obj.prepare_from(_items(rng), 5, Xoshiro256(0))
    assert 0.0 <= obj.accuracy(init_params(ENC).theta, batch) <= 1.0
