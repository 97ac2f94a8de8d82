"""Hashed-token siamese encoder with a hand-written backward pass.

Forward for one token sequence::

    x = mean(E[ids])            # (d,)
    h = tanh(x @ W1 + b1)       # (hidden,)
    e = h @ W2 + b2             # (d_out,)

A pair is scored with ``logit = a * cos(e1, e2) + b`` and trained with
sigmoid cross-entropy. All parameters live in one flat float64 vector so
optimizers and meta-learners can treat them as plain arrays.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptySequence, ZeroVector
from .rng import Xoshiro256

STR_TOKEN = "<str>"

_LEX = re.compile(
    r"""
    (?P<comment>//[^\n]*|/\*.*?(?:\*/|\Z)|\#[^\n]*)
  | (?P<string>"(?:\\.|[^"\\\n])*"?|'(?:\\.|[^'\\\n])*'?)
  | (?P<word>[A-Za-z0-9_]+)
  | (?P<space>\s+)
  | (?P<other>.)
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(source: str) -> list[str]:
    """Language-agnostic lexer.

    Comments (``//``, ``/* */``, ``#``) are dropped, string and char
    literals become ``<str>``, word runs are kept whole, and any other
    non-space character is its own token.
    """
    out = []
    for m in _LEX.finditer(source):
        kind = m.lastgroup
        if kind == "word" or kind == "other":
            out.append(m.group())
        elif kind == "string":
            out.append(STR_TOKEN)
    return out


FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def hash_token(token: str, V: int) -> int:
    if V <= 0 or V & (V - 1):
        raise ValueError(f"vocabulary size must be a power of two, got {V}")
    return fnv1a64(token.encode("utf-8")) & (V - 1)


@dataclass(frozen=True)
class EncoderConfig:
    V: int = 4096
    d: int = 64
    h: int = 128
    d_out: int = 64
    max_len: int = 512
    init_seed: int = 0

    def __post_init__(self):
        for name in ("V", "d", "h", "d_out", "max_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.V & (self.V - 1):
            raise ValueError("V must be a power of two")

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [
            ("E", (self.V, self.d)),
            ("W1", (self.d, self.h)),
            ("b1", (self.h,)),
            ("W2", (self.h, self.d_out)),
            ("b2", (self.d_out,)),
            ("a", ()),
            ("b", ()),
        ]

    @property
    def size(self) -> int:
        return sum(int(np.prod(s)) for _, s in self.shapes())

    def to_dict(self) -> dict:
        return asdict(self)


def _offsets(cfg: EncoderConfig) -> dict[str, tuple[int, int, tuple]]:
    out, pos = {}, 0
    for name, shape in cfg.shapes():
        n = int(np.prod(shape))
        out[name] = (pos, pos + n, shape)
        pos += n
    return out


class Params:
    """Flat parameter vector with named views (E, W1, b1, W2, b2, a, b).

    Gradients use the same container.
    """

    def __init__(self, config: EncoderConfig, theta: np.ndarray | None = None):
        self.config = config
        if theta is None:
            theta = np.zeros(config.size)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (config.size,):
            raise ValueError(f"expected {config.size} parameters, got {theta.shape}")
        self.theta = theta

    def _view(self, name):
        lo, hi, shape = _offsets(self.config)[name]
        return self.theta[lo:hi].reshape(shape)

    E = property(lambda self: self._view("E"))
    W1 = property(lambda self: self._view("W1"))
    b1 = property(lambda self: self._view("b1"))
    W2 = property(lambda self: self._view("W2"))
    b2 = property(lambda self: self._view("b2"))

    @property
    def a(self) -> float:
        return float(self.theta[-2])

    @property
    def b(self) -> float:
        return float(self.theta[-1])

    def copy(self) -> "Params":
        return Params(self.config, self.theta.copy())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Params)
            and self.config == other.config
            and np.array_equal(self.theta, other.theta)
        )

    def save(self, path) -> None:
        header = json.dumps(self.config.to_dict(), sort_keys=True)
        with open(path, "wb") as fh:
            fh.write(header.encode("utf-8") + b"\n")
            fh.write(self.theta.astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "Params":
        raw = Path(path).read_bytes()
        nl = raw.index(b"\n")
        cfg = EncoderConfig(**json.loads(raw[:nl].decode("utf-8")))
        theta = np.frombuffer(raw[nl + 1 :], dtype="<f8").astype(np.float64)
        return cls(cfg, theta)


Gradients = Params


def init_params(cfg: EncoderConfig, logit_scale: float = 5.0, embed_bound: float = 1.0) -> Params:
    """Seeded uniform init.

    W1 and W2 are uniform in +-1/sqrt(fan_in). Token vectors are uniform in
    +-embed_bound: with +-1/sqrt(d) the pooled embeddings have norm ~0.05
    and the cosine's curvature (~1/|e|^2) makes any usable SGD step
    diverge into the all-aligned state. Biases start at zero and the
    logit head at ``a=logit_scale, b=0``.
    """
    rng = Xoshiro256(cfg.init_seed)
    p = Params(cfg)
    for name, bound in (("E", embed_bound), ("W1", 1.0 / np.sqrt(cfg.d)), ("W2", 1.0 / np.sqrt(cfg.h))):
        lo, hi, _ = _offsets(cfg)[name]
        p.theta[lo:hi] = rng.uniform_array(hi - lo, -bound, bound)
    p.theta[-2] = logit_scale
    return p


def encode(source: str, cfg: EncoderConfig) -> np.ndarray:
    """Token ids of ``source`` truncated to ``max_len``."""
    toks = tokenize(source)[: cfg.max_len]
    return np.array([hash_token(t, cfg.V) for t in toks], dtype=np.int64)


class TokenCache:
    """Memoized ``encode`` keyed by submission id."""

    def __init__(self, cfg: EncoderConfig):
        self.cfg = cfg
        self._ids: dict[str, np.ndarray] = {}

    def __call__(self, key: str, source: str) -> np.ndarray:
        ids = self._ids.get(key)
        if ids is None:
            ids = encode(source, self.cfg)
            self._ids[key] = ids
        return ids


def pooling_matrix(seqs: Sequence[np.ndarray], V: int) -> sp.csr_matrix:
    """Row i averages the embedding rows of ``seqs[i]``."""
    rows, cols, vals = [], [], []
    for i, ids in enumerate(seqs):
        if len(ids) == 0:
            raise EmptySequence(f"sequence {i} is empty")
        uniq, counts = np.unique(ids, return_counts=True)
        rows.append(np.full(len(uniq), i))
        cols.append(uniq)
        vals.append(counts / len(ids))
    if not rows:
        return sp.csr_matrix((0, V))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(seqs), V)
    )


# --------------------------------------------------------------------------
# forward / backward on flat parameter vectors


def forward(theta: np.ndarray, cfg: EncoderConfig, M: sp.csr_matrix):
    p = Params(cfg, theta)
    X = np.asarray(M @ p.E)
    H = np.tanh(X @ p.W1 + p.b1)
    out = H @ p.W2 + p.b2
    return out, (M, X, H)


def backward(theta: np.ndarray, cfg: EncoderConfig, cache, d_out: np.ndarray) -> np.ndarray:
    M, X, H = cache
    p = Params(cfg, theta)
    g = Params(cfg)
    g.W2[...] = H.T @ d_out
    g.b2[...] = d_out.sum(axis=0)
    dZ = (d_out @ p.W2.T) * (1.0 - H * H)
    g.W1[...] = X.T @ dZ
    g.b1[...] = dZ.sum(axis=0)
    g.E[...] = np.asarray(M.T @ (dZ @ p.W1.T))
    return g.theta


def embed(params: Params, seq) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.int64)
    if seq.size == 0:
        raise EmptySequence("cannot embed an empty sequence")
    out, _ = forward(params.theta, params.config, pooling_matrix([seq], params.config.V))
    return out[0]


def embed_many(params: Params, seqs: Sequence[np.ndarray], chunk: int = 4096) -> np.ndarray:
    parts = []
    for i in range(0, len(seqs), chunk):
        M = pooling_matrix(seqs[i : i + chunk], params.config.V)
        parts.append(forward(params.theta, params.config, M)[0])
    if not parts:
        return np.zeros((0, params.config.d_out))
    return np.vstack(parts)


def similarity(e1, e2) -> float:
    e1, e2 = np.asarray(e1, dtype=np.float64), np.asarray(e2, dtype=np.float64)
    n1, n2 = np.linalg.norm(e1), np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.clip(e1 @ e2 / (n1 * n2), -1.0, 1.0))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def classify_pair(params: Params, seq1, seq2) -> tuple[float, float]:
    s = similarity(embed(params, seq1), embed(params, seq2))
    logit = params.a * s + params.b
    return float(sigmoid(logit)), float(logit)


class PairBatch:
    """Labeled pairs with shared sequences embedded once.

    ``pairs`` holds ``(seq_a, seq_b, label)``; sequences that are the same
    object are deduplicated, so pass cached arrays (see :class:`TokenCache`).
    """

    def __init__(self, pairs, V: int):
        if not pairs:
            raise ValueError("empty pair batch")
        index: dict[int, int] = {}
        seqs = []

        def slot(seq):
            k = id(seq)
            if k not in index:
                index[k] = len(seqs)
                seqs.append(seq)
            return index[k]

        self.left = np.array([slot(a) for a, _, _ in pairs])
        self.right = np.array([slot(b) for _, b, _ in pairs])
        self.y = np.array([float(lbl) for _, _, lbl in pairs])
        self.seqs = seqs
        self.M = pooling_matrix(seqs, V)

    def __len__(self) -> int:
        return len(self.y)


def _as_batch(batch, cfg: EncoderConfig) -> PairBatch:
    return batch if isinstance(batch, PairBatch) else PairBatch(batch, cfg.V)


def unit_rows(E: np.ndarray):
    norms = np.linalg.norm(E, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVector("zero embedding")
    return E / norms[:, None], norms


def pair_logits(theta, cfg, batch: PairBatch):
    out, cache = forward(theta, cfg, batch.M)
    U, norms = unit_rows(out)
    s = np.clip(np.einsum("ij,ij->i", U[batch.left], U[batch.right]), -1.0, 1.0)
    return theta[-2] * s + theta[-1], s, (out, cache, U, norms)


def pair_loss_grad(theta: np.ndarray, cfg: EncoderConfig, batch) -> tuple[float, np.ndarray]:
    """Mean sigmoid cross-entropy over ``batch`` and its exact gradient."""
    batch = _as_batch(batch, cfg)
    a = theta[-2]
    logit, s, (out, cache, U, norms) = pair_logits(theta, cfg, batch)
    y = batch.y
    n = len(y)
    loss = float(np.mean(np.logaddexp(0.0, logit) - y * logit))
    dlogit = (sigmoid(logit) - y) / n
    ds = dlogit * a
    # d cos(u, v) / du = (v_hat - s * u_hat) / |u|
    L, R = batch.left, batch.right
    dL = (U[R] - s[:, None] * U[L]) / norms[L][:, None] * ds[:, None]
    dR = (U[L] - s[:, None] * U[R]) / norms[R][:, None] * ds[:, None]
    d_out = np.zeros_like(out)
    np.add.at(d_out, L, dL)
    np.add.at(d_out, R, dR)
    grad = backward(theta, cfg, cache, d_out)
    grad[-2] = float(dlogit @ s)
    grad[-1] = float(dlogit.sum())
    return loss, grad


def loss_and_grad(params: Params, batch) -> tuple[float, Gradients]:
    loss, g = pair_loss_grad(params.theta, params.config, batch)
    return loss, Gradients(params.config, g)


def pair_probabilities(params: Params, batch) -> np.ndarray:
    batch = _as_batch(batch, params.config)
    logit, _, _ = pair_logits(params.theta, params.config, batch)
    return sigmoid(logit)


class PairObjective:
    """Cross-entropy pair objective in the form the meta-learner expects."""

    def __init__(self, cfg: EncoderConfig, hvp_eps: float = 1e-5):
        self.cfg = cfg
        self.hvp_eps = hvp_eps

    def prepare(self, batch):
        return _as_batch(batch, self.cfg)

    def loss_and_grad(self, theta, batch):
        return pair_loss_grad(theta, self.cfg, batch)

    def hvp(self, theta, batch, v):
        # central difference of the exact gradient along v
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return np.zeros_like(v)
        eps = self.hvp_eps / nv
        _, gp = pair_loss_grad(theta + eps * v, self.cfg, batch)
        _, gm = pair_loss_grad(theta - eps * v, self.cfg, batch)
        return (gp - gm) / (2 * eps)
