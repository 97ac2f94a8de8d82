"""Compare encoder and InfoNCE gradients to central finite differences."""

from __future__ import annotations

import argparse

import numpy as np

from fewshot_ccd.contrastive import ContrastiveObjective
from fewshot_ccd.encoder import EncoderConfig, PairBatch, init_params, pair_loss_grad
from fewshot_ccd.rng import Xoshiro256


def fd_grad(f, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(g, fd, floor):
    return float(np.max(np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor)))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--draws", type=int, default=20)
    ap.add_argument("--step", type=float, default=1e-5)
    ap.add_argument("--floor", type=float, default=1e-6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    for k in range(args.draws):
        cfg = EncoderConfig(V=64, d=int(rng.integers(2, 6)), h=int(rng.integers(2, 7)), d_out=int(rng.integers(2, 5)), init_seed=k)
        theta = init_params(cfg).theta
        seqs = [rng.integers(0, cfg.V, size=int(rng.integers(2, 9))) for _ in range(6)]
        batch = PairBatch([(seqs[0], seqs[1], True), (seqs[2], seqs[3], False), (seqs[4], seqs[5], True)], cfg.V)
        g = pair_loss_grad(theta, cfg, batch)[1]
        ce = rel_err(g, fd_grad(lambda t: pair_loss_grad(t, cfg, batch)[0], theta, args.step), args.floor)
        obj = ContrastiveObjective(cfg, temperature=0.5, num_negatives=2)
        prepared = obj.prepare_from([(s, i % 2) for i, s in enumerate(seqs)], 2, Xoshiro256(k))
        g = obj.loss_and_grad(theta, prepared)[1]
        nce = rel_err(g, fd_grad(lambda t: obj.loss_and_grad(t, prepared)[0], theta, args.step), args.floor)
        print(f"draw {k:3d}  params {cfg.size:5d}  ce {ce:.2e}  infonce {nce:.2e}")


if __name__ == "__main__":
    main()
