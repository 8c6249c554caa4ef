"""Forward corruption: element noising, factored indicators, and the
classical transition-matrix process they coincide with.

The per-element law is the alpha-mixture of the clean label's point mass
with a noise distribution q0. The factored variant draws the keep
indicator explicitly, which is what the critic machinery trains on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dists import CategoricalDist, mix, sample_index
from .families import MaskLabelError
from .graphs import CorruptionMask, GraphInstance, GraphSchema, upper_indices
from .rng import RngStream
from .schedule import Schedule

MASK = "MASK"
MARGINAL = "MARGINAL"
UNIFORM = "UNIFORM"


@dataclass(frozen=True)
class NoiseSpec:
    """Noise family plus its node and edge q0 over the full vocabulary."""

    kind: str
    schema: GraphSchema
    node_q0: CategoricalDist
    edge_q0: CategoricalDist

    @classmethod
    def mask(cls, schema: GraphSchema) -> "NoiseSpec":
        schema = schema.with_mask(True)
        return cls(
            MASK,
            schema,
            CategoricalDist.delta(schema.node_mask, schema.node_vocab),
            CategoricalDist.delta(schema.edge_mask, schema.edge_vocab),
        )

    @classmethod
    def uniform(cls, schema: GraphSchema) -> "NoiseSpec":
        schema = schema.with_mask(False)
        return cls(
            UNIFORM,
            schema,
            CategoricalDist.uniform(schema.d_x),
            CategoricalDist.uniform(schema.d_e),
        )

    @classmethod
    def marginal(cls, schema: GraphSchema, node_freqs, edge_freqs) -> "NoiseSpec":
        schema = schema.with_mask(False)
        return cls(
            MARGINAL,
            schema,
            CategoricalDist.from_weights(node_freqs),
            CategoricalDist.from_weights(edge_freqs),
        )

    def q0(self, slot_kind: str) -> CategoricalDist:
        return self.node_q0 if slot_kind == "node" else self.edge_q0


def noise_element(z1: int, alpha_t: float, q0: CategoricalDist, rng: RngStream) -> int:
    """Sample the corrupted label from the alpha-mixture law."""
    return sample_index(noise_element_law(z1, alpha_t, q0).probs, rng.uniform())


def noise_element_law(z1: int, alpha_t: float, q0: CategoricalDist) -> CategoricalDist:
    return mix(CategoricalDist.delta(z1, q0.k), q0, alpha_t)


def noise_element_factored(
    z1: int, alpha_t: float, q0: CategoricalDist, rng: RngStream
) -> tuple[int, int]:
    """Draw the keep indicator first: (z1, 1) when kept, (q0 sample, 0) otherwise."""
    if not 0.0 <= alpha_t <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha_t}")
    if rng.uniform() < alpha_t:
        return z1, 1
    return sample_index(q0.probs, rng.uniform()), 0


def _check_clean(g: GraphInstance, schema: GraphSchema) -> None:
    if np.any(g.node_labels >= schema.d_x) or np.any(g.edge_labels >= schema.d_e):
        raise MaskLabelError("clean instance expected, found out-of-vocabulary labels")


def noise_graph_at_alpha(
    g1: GraphInstance, alpha: float, spec: NoiseSpec, rng: RngStream
) -> tuple[GraphInstance, CorruptionMask]:
    """Independently corrupt every node slot and unordered edge slot.

    Each slot consumes its own child stream keyed by slot indices, so the
    result does not depend on iteration order. One draw per unordered
    pair is mirrored into both matrix entries.
    """
    _check_clean(g1, spec.schema)
    n = g1.n
    node_labels = np.empty(n, dtype=np.int64)
    node_flags = np.empty(n, dtype=bool)
    for i in range(n):
        z, a = noise_element_factored(int(g1.node_labels[i]), alpha, spec.node_q0, rng.child(0, i))
        node_labels[i] = z
        node_flags[i] = bool(a)
    iu, ju = upper_indices(n)
    upper = np.empty(iu.size, dtype=np.int64)
    upper_a = np.empty(iu.size, dtype=bool)
    for k in range(iu.size):
        z, a = noise_element_factored(
            int(g1.edge_labels[iu[k], ju[k]]), alpha, spec.edge_q0, rng.child(1, int(iu[k]), int(ju[k]))
        )
        upper[k] = z
        upper_a[k] = bool(a)
    zt = GraphInstance.from_upper(node_labels, upper)
    mask = CorruptionMask.from_upper(node_flags, upper_a)
    return zt, mask


def noise_graph(
    g1: GraphInstance, t: float, schedule: Schedule, spec: NoiseSpec, rng: RngStream
) -> tuple[GraphInstance, CorruptionMask]:
    return noise_graph_at_alpha(g1, schedule.alpha(t), spec, rng)


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic K x K matrix."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("entries must be square")
        if np.any(m < -1e-15):
            raise ValueError("entries must be non-negative")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("rows must sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def apply_delta(self, z1: int) -> CategoricalDist:
        return CategoricalDist(self.entries[z1].copy())


def forward_transition_matrix(beta_t: float, q0: CategoricalDist) -> TransitionMatrix:
    """(1 - beta) I + beta A where every row of A equals q0.

    A is idempotent because its rows are a fixed distribution, which is
    what makes products of these matrices collapse to a single mixture.
    """
    if not 0.0 <= beta_t <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta_t}")
    k = q0.k
    a = np.tile(q0.probs, (k, 1))
    return TransitionMatrix((1.0 - beta_t) * np.eye(k) + beta_t * a)


def compose_forward(betas, q0: CategoricalDist) -> TransitionMatrix:
    """Ordered product of per-step transition matrices; empty list is identity."""
    m = np.eye(q0.k)
    for beta in betas:
        m = m @ forward_transition_matrix(beta, q0).entries
    return TransitionMatrix(m)


def betas_from_schedule(schedule: Schedule, times_desc) -> list[float]:
    """Per-step noising rates for a descending time grid starting at the data end.

    beta_r = 1 - alpha(s_r)/alpha(s_{r-1}); a 0/0 step contributes beta=0,
    which leaves the already-telescoped product unchanged.
    """
    betas = []
    prev = None
    for s in times_desc:
        a = schedule.alpha(s)
        if prev is not None:
            betas.append(0.0 if prev == 0.0 else 1.0 - a / prev)
        prev = a
    return betas
