"""Categorical distributions over label vocabularies."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class CategoricalDist:
    """Probability vector over K labels; the currency of every noising and
    denoising law in this package."""

    probs: np.ndarray = field()

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probs must be a non-empty 1-D vector")
        if not np.all(np.isfinite(p)):
            raise ValueError("probs must be finite")
        if np.any(p < -1e-15) or np.any(p > 1.0 + 1e-12):
            raise ValueError("entries must lie in [0, 1]")
        p = np.clip(p, 0.0, None)
        s = p.sum()
        if abs(s - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {s!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def k(self) -> int:
        return self.probs.size

    @classmethod
    def delta(cls, label: int, k: int) -> "CategoricalDist":
        p = np.zeros(k)
        p[label] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, k: int) -> "CategoricalDist":
        return cls(np.full(k, 1.0 / k))

    @classmethod
    def from_weights(cls, weights) -> "CategoricalDist":
        """Normalize non-negative weights into a distribution."""
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        s = w.sum()
        if s <= 0:
            raise ValueError("weights sum to zero")
        return cls(w / s)


def mix(data: CategoricalDist, noise: CategoricalDist, alpha: float) -> CategoricalDist:
    """Convex combination alpha*data + (1-alpha)*noise.

    This single expression is the entire forward corruption law: at
    alpha=1 it returns the data distribution, at alpha=0 pure noise.
    """
    if data.k != noise.k:
        raise ValueError(f"dimension mismatch: {data.k} vs {noise.k}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    p = alpha * data.probs + (1.0 - alpha) * noise.probs
    s = p.sum()
    if abs(s - 1.0) > _SUM_TOL:  # guard drift from long float products
        p = p / s
    return CategoricalDist(p)


def sample_categorical(dist: CategoricalDist, rng: RngStream) -> int:
    """Inverse-CDF sample using a single uniform draw."""
    return sample_index(dist.probs, rng.uniform())


def sample_index(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF lookup of a uniform u in [0, 1) against raw probs."""
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(k, probs.size - 1)
