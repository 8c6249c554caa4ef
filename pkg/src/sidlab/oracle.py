"""Exact posterior denoiser for enumerable families.

Enumerates the family once and applies Bayes' rule: the posterior weight
of instance G given a corrupted observation multiplies the per-slot
corruption likelihoods alpha*[match] + (1-alpha)*q0[observed]. This is
the ground-truth clean-data posterior every sampler and learned model is
checked against.

In the factored variant the observation is the pair (values, keep
indicators); corrupted slots then contribute a likelihood factor that is
constant across instances, so the implementation never reads their
values at all. That makes the posterior exactly invariant to rewriting
corrupted slots, mask or otherwise.
"""

from __future__ import annotations

import numpy as np

from .denoiser import DenoiserOutput
from .dists import sample_index
from .families import ToyFamily, enumerate_family
from .graphs import CorruptionMask, GraphInstance
from .noising import MASK, NoiseSpec
from .rng import RngStream


class BayesOracle:
    kind = "bayes_oracle"

    def __init__(self, family: ToyFamily, spec: NoiseSpec):
        self.family = family
        self.spec = spec
        self.schema = spec.schema
        self._by_size: dict[int, dict] = {}
        for g, p in enumerate_family(family):
            entry = self._by_size.setdefault(
                g.n, {"nodes": [], "edges": [], "prior": []}
            )
            entry["nodes"].append(g.node_labels)
            entry["edges"].append(g.upper_edges())
            entry["prior"].append(p)
        for n, entry in self._by_size.items():
            entry["nodes"] = np.stack(entry["nodes"])  # (F, n)
            entry["edges"] = (
                np.stack(entry["edges"]) if entry["edges"][0].size else np.zeros((len(entry["prior"]), 0), dtype=np.int64)
            )
            prior = np.asarray(entry["prior"])
            entry["prior"] = prior / prior.sum()
            # one-hot views for fast marginalization
            entry["nodes_oh"] = _one_hot(entry["nodes"], self.schema.d_x)
            entry["edges_oh"] = _one_hot(entry["edges"], self.schema.d_e)

    def _entry(self, n: int) -> dict:
        if n not in self._by_size:
            raise ValueError(f"family has no instance with {n} nodes")
        return self._by_size[n]

    def _marginals(self, entry: dict, weights: np.ndarray) -> DenoiserOutput:
        node_probs = np.einsum("f,fnv->nv", weights, entry["nodes_oh"])
        edge_probs = np.einsum("f,fmv->mv", weights, entry["edges_oh"])
        return DenoiserOutput(node_probs, edge_probs)

    def _normalize(self, weights: np.ndarray, prior: np.ndarray) -> np.ndarray:
        total = weights.sum()
        if total <= 0.0:
            # observation inconsistent with every instance; fall back to the prior
            return prior.copy()
        return weights / total

    def posterior(self, z_t: GraphInstance, alpha: float) -> np.ndarray:
        """Posterior weights over the same-size enumerated instances."""
        entry = self._entry(z_t.n)
        if self.spec.kind == MASK:
            # constant factors from masked slots drop out of the posterior
            kept_nodes = z_t.node_labels != self.schema.node_mask
            kept_edges = z_t.upper_edges() != self.schema.edge_mask
            w = entry["prior"] * _indicator_likelihood(
                entry, z_t.node_labels, kept_nodes, z_t.upper_edges(), kept_edges
            )
        else:
            nq = self.spec.node_q0.probs
            eq = self.spec.edge_q0.probs
            like_n = alpha * (entry["nodes"] == z_t.node_labels) + (1 - alpha) * nq[z_t.node_labels]
            like_e = alpha * (entry["edges"] == z_t.upper_edges()) + (1 - alpha) * eq[z_t.upper_edges()]
            w = entry["prior"] * like_n.prod(axis=1) * like_e.prod(axis=1)
        return self._normalize(w, entry["prior"])

    def predict(self, z_t: GraphInstance, alpha: float) -> DenoiserOutput:
        return self._marginals(self._entry(z_t.n), self.posterior(z_t, alpha))

    def sample_clean(self, z_t: GraphInstance, alpha: float, rng: RngStream) -> GraphInstance:
        """One joint draw from the exact clean posterior: a whole family
        instance, not independent per-slot labels."""
        entry = self._entry(z_t.n)
        w = self.posterior(z_t, alpha)
        f = sample_index(w, rng.uniform())
        return GraphInstance.from_upper(entry["nodes"][f].copy(), entry["edges"][f].copy())

    def predict_factored(
        self, z_t: GraphInstance, kept: CorruptionMask, alpha: float
    ) -> DenoiserOutput:
        """Posterior given (values, keep indicators); corrupted values are
        provably uninformative and are never read."""
        entry = self._entry(z_t.n)
        w = entry["prior"] * _indicator_likelihood(
            entry, z_t.node_labels, kept.node_flags, z_t.upper_edges(), kept.upper_flags()
        )
        return self._marginals(entry, self._normalize(w, entry["prior"]))

    def predict_many(
        self, node_states: np.ndarray, edge_states: np.ndarray, alpha: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``predict`` over S same-size observations.

        Returns (S, n, d_x) and (S, m, d_e) marginal arrays; used by the
        exact trajectory-propagation checks.
        """
        n = node_states.shape[1]
        entry = self._entry(n)
        nq = self.spec.node_q0.probs
        eq = self.spec.edge_q0.probs
        like = entry["prior"][None, :] * np.prod(
            alpha * (node_states[:, None, :] == entry["nodes"][None, :, :])
            + (1 - alpha) * nq[node_states][:, None, :],
            axis=2,
        )
        like *= np.prod(
            alpha * (edge_states[:, None, :] == entry["edges"][None, :, :])
            + (1 - alpha) * eq[edge_states][:, None, :],
            axis=2,
        )
        totals = like.sum(axis=1, keepdims=True)
        fallback = totals[:, 0] <= 0.0
        like[fallback] = entry["prior"]
        totals[fallback] = 1.0
        w = like / totals
        node_probs = np.einsum("sf,fnv->snv", w, entry["nodes_oh"])
        edge_probs = np.einsum("sf,fmv->smv", w, entry["edges_oh"])
        return node_probs, edge_probs

    def family_distribution(self, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        entry = self._entry(n)
        return entry["nodes"], entry["edges"], entry["prior"]


def _one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(labels.shape + (k,))
    grid = np.indices(labels.shape)
    out[(*grid, labels)] = 1.0
    return out


def _indicator_likelihood(entry, node_vals, node_kept, edge_vals, edge_kept) -> np.ndarray:
    ln = np.all((entry["nodes"] == node_vals) | ~node_kept, axis=1)
    le = np.all((entry["edges"] == edge_vals) | ~edge_kept, axis=1)
    return (ln & le).astype(np.float64)
