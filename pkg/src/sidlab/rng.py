"""Counter-based deterministic random streams.

Every draw is a pure function of (seed, stream, counter), so identical
streams replay bit-identically on any platform and disjoint streams are
safe to consume concurrently. Child streams are derived by hashing the
parent stream id together with integer indices, which is how per-element
and per-step randomness stays order-independent.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer; a strong 64-bit mixing function."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _fold(state: int, value: int) -> int:
    return mix64(state ^ ((value + _GOLDEN) & _MASK64))


def _mix64_array(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(_GOLDEN)) & np.uint64(_MASK64)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


class RngStream:
    """A named random stream identified by (seed, stream).

    Drawing advances a local counter; ``child`` derives an independent
    stream without touching the parent, so sibling consumers never
    interleave.
    """

    __slots__ = ("seed", "stream", "_key", "_counter")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._key = _fold(mix64(self.seed), self.stream)
        self._counter = 0

    def child(self, *ids: int) -> "RngStream":
        """Derive an independent stream keyed by integer indices."""
        sub = self.stream
        for i in ids:
            sub = _fold(sub, int(i))
        return RngStream(self.seed, sub)

    def uniform(self) -> float:
        """One double in [0, 1) with 53 random bits."""
        u = mix64(self._key ^ mix64(self._counter))
        self._counter += 1
        return (u >> 11) * 2.0 ** -53

    def uniforms(self, n: int) -> np.ndarray:
        """Vector of n iid uniforms in [0, 1)."""
        counters = np.arange(self._counter, self._counter + n, dtype=np.uint64)
        self._counter += n
        bits = _mix64_array(_mix64_array(counters) ^ np.uint64(self._key))
        return (bits >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def integers(self, n: int, high: int) -> np.ndarray:
        """Vector of n iid integers in [0, high)."""
        return np.minimum((self.uniforms(n) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        # ties among 53-bit uniforms are ~n^2 / 2^53, negligible
        return np.argsort(self.uniforms(n), kind="stable")

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream})"
