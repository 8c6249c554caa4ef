"""Sample-quality metrics: validity, uniqueness, novelty, degree TV."""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .families import ToyFamily, is_valid
from .graphs import NO_EDGE, GraphInstance, upper_indices

log = logging.getLogger(__name__)

EXACT_CANONICAL_MAX_N = 8


def tv_distance(h1, h2) -> float:
    """Total variation between two histograms on the same support."""
    a = np.asarray(h1, dtype=np.float64)
    b = np.asarray(h2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("histograms must share a support")
    if a.sum() <= 0 or b.sum() <= 0:
        raise ValueError("histograms must have positive mass")
    return 0.5 * float(np.abs(a / a.sum() - b / b.sum()).sum())


_PERM_CACHE: dict[int, np.ndarray] = {}


def _all_perms(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    return _PERM_CACHE[n]


def canonical_key(g: GraphInstance) -> tuple:
    """Permutation-invariant identity of a graph.

    Exact for n <= 8 (lexicographically minimal label string over all
    node orderings); beyond that, an invariant hash of sorted degree and
    label multisets, which can conflate rare non-isomorphic pairs.
    """
    n = g.n
    if n <= EXACT_CANONICAL_MAX_N:
        perms = _all_perms(n)
        iu, ju = upper_indices(n)
        rows = np.concatenate(
            [g.node_labels[perms], g.edge_labels[perms[:, iu], perms[:, ju]]], axis=1
        )
        best = rows[np.lexsort(rows.T[::-1])[0]]
        return ("exact", n, tuple(int(v) for v in best))
    degrees = np.sort((g.edge_labels != NO_EDGE).sum(axis=1))
    labels = np.sort(g.node_labels)
    edge_multiset = np.sort(g.upper_edges())
    return (
        "hash",
        n,
        tuple(int(v) for v in degrees),
        tuple(int(v) for v in labels),
        tuple(int(v) for v in edge_multiset),
    )


def degree_histogram(graphs: list[GraphInstance], max_degree: int) -> np.ndarray:
    h = np.zeros(max_degree + 1)
    for g in graphs:
        deg = (g.edge_labels != NO_EDGE).sum(axis=1)
        h += np.bincount(np.minimum(deg, max_degree), minlength=max_degree + 1)
    return h


@dataclass(frozen=True)
class MetricsRow:
    sampler: str
    nfe: int
    validity: float
    unique: float
    novel: float
    degree_tv: float
    seed: int

    def __post_init__(self):
        for v in (self.validity, self.unique, self.novel):
            if not 0.0 <= v <= 1.0:
                raise ValueError("fractions must lie in [0, 1]")


def evaluate_batch(
    samples: list[GraphInstance], dataset: list[GraphInstance], family: ToyFamily
) -> dict:
    """Validity, uniqueness, novelty, and the degree-histogram TV of one batch."""
    if not samples:
        raise ValueError("empty sample batch")
    validity = sum(1 for g in samples if is_valid(g, family)) / len(samples)
    keys = [canonical_key(g) for g in samples]
    if any(k[0] == "hash" for k in keys):
        log.warning("uniqueness uses invariant-hash canonicalization for n > %d", EXACT_CANONICAL_MAX_N)
    unique_keys = set(keys)
    train_keys = {canonical_key(g) for g in dataset}
    novel = sum(1 for k in unique_keys if k not in train_keys)
    max_deg = max(max(g.n for g in samples), max(g.n for g in dataset)) - 1
    dtv = tv_distance(
        degree_histogram(samples, max_deg), degree_histogram(dataset, max_deg)
    )
    return {
        "validity": validity,
        "unique": len(unique_keys) / len(samples),
        "novel": novel / len(unique_keys),
        "degree_tv": dtv,
    }
