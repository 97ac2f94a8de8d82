"""Portable seeded randomness.

All sampling in the package flows through :class:`Xoshiro256`, a
xoshiro256** generator whose state is expanded from a 64-bit seed with
splitmix64. The stream is defined purely in terms of 64-bit integer
arithmetic, so the same seed gives the same datasets on every platform.
"""

from __future__ import annotations

from typing import MutableSequence, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256:
    """xoshiro256** seeded through splitmix64.

    ``Xoshiro256(seed)`` expands ``seed`` into four state words. Use
    :meth:`from_state` to set the raw state (reference vectors are
    published for raw states).
    """

    __slots__ = ("s",)

    def __init__(self, seed: int = 0):
        sm = int(seed) & MASK64
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self.s = words

    @classmethod
    def from_state(cls, state: Sequence[int]) -> "Xoshiro256":
        if len(state) != 4 or not any(state):
            raise ValueError("state must be four words, not all zero")
        rng = cls.__new__(cls)
        rng.s = [int(w) & MASK64 for w in state]
        return rng

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by masked rejection (unbiased)."""
        if n <= 0:
            raise ValueError("n must be positive")
        if n == 1:
            return 0
        mask = (1 << (n - 1).bit_length()) - 1
        while True:
            x = self.next_u64() & mask
            if x < n:
                return x

    def uniform_array(self, n: int, low: float, high: float) -> np.ndarray:
        # Inlined generator loop; parameter init draws a few hundred thousand values.
        s0, s1, s2, s3 = self.s
        out = np.empty(n, dtype=np.float64)
        scale = 1.0 / 9007199254740992.0
        for i in range(n):
            r = (((((s1 * 5) & MASK64) << 7 | ((s1 * 5) & MASK64) >> 57) & MASK64) * 9) & MASK64
            t = (s1 << 17) & MASK64
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & MASK64
            out[i] = (r >> 11) * scale
        self.s = [s0, s1, s2, s3]
        return low + (high - low) * out

    def shuffle(self, items: MutableSequence[T]) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """``k`` distinct integers from ``range(n)``, in sampling order."""
        if k > n or k < 0:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        if n <= 4 * k or n <= 1024:
            pool = list(range(n))
            for i in range(k):
                j = i + self.below(n - i)
                pool[i], pool[j] = pool[j], pool[i]
            return pool[:k]
        seen: set[int] = set()
        out = []
        while len(out) < k:
            x = self.below(n)
            if x not in seen:
                seen.add(x)
                out.append(x)
        return out

    def sample(self, items: Sequence[T], k: int) -> list[T]:
        return [items[i] for i in self.sample_indices(len(items), k)]

    def choice(self, items: Sequence[T]) -> T:
        return items[self.below(len(items))]

    def spawn(self, key: int) -> "Xoshiro256":
        """Independent child stream derived from the next output and ``key``."""
        return Xoshiro256(self.next_u64() ^ ((int(key) * 0x9E3779B97F4A7C15) & MASK64))


def derive_seed(seed: int, *labels: object) -> int:
    """Deterministic 64-bit seed for a named sub-task (FNV-1a over the labels)."""
    h = 0xCBF29CE484222325 ^ (int(seed) & MASK64)
    for ch in "/".join(str(x) for x in labels).encode("utf-8"):
        h ^= ch
        h = (h * 0x100000001B3) & MASK64
    return h
