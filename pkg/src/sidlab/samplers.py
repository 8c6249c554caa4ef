"""Sampling step rules and the generation loop.

Four per-step rules share the same plug-in denoiser:

* ``sid``: sample a full clean prediction, then re-corrupt it at the
  next noise level. The output law per element is
  alpha_s * p_clean + (1 - alpha_s) * q0, with no dependence on the
  previous state beyond the prediction itself.
* ``ddm``: the classical posterior step q(z_s | z_t, z1) marginalized
  over a sampled clean label; with mask noise, unmasked elements can
  never change again.
* ``dfm``: the rate-based step that keeps the current label except with
  probability dt * alpha_dot / (1 - alpha), clamped into [0, 1].
* ``corrector``: denoise fully to the clean end, then run the forward
  corruption back to the next grid time. Its law coincides with the sid
  step exactly, which the law functions below let tests verify.

Each step function has a companion ``*_law`` returning the exact
per-element output distribution over the full (possibly masked)
vocabulary, for analytic comparisons at machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dists import sample_index
from .graphs import GraphInstance, upper_indices
from .noising import MASK, NoiseSpec, noise_element_law, noise_graph_at_alpha
from .rng import RngStream
from .schedule import Schedule

SID = "SID"
DDM_EXACT = "DDM_EXACT"
DFM_RATE = "DFM_RATE"
CORRECTOR = "CORRECTOR"


class MaskResidueError(Exception):
    """MASK labels survived to the clean end of a trajectory."""


@dataclass(frozen=True)
class SamplerSpec:
    kind: str
    T: int
    noise: NoiseSpec
    schedule: Schedule

    def __post_init__(self):
        if self.kind not in (SID, DDM_EXACT, DFM_RATE, CORRECTOR):
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if self.T < 1:
            raise ValueError("need at least one step")

    @property
    def dt(self) -> float:
        return 1.0 / self.T


def _embed_clean(probs: np.ndarray, vocab: int) -> np.ndarray:
    """Lift clean-vocabulary rows into the full (masked) vocabulary."""
    out = np.zeros(probs.shape[:-1] + (vocab,))
    out[..., : probs.shape[-1]] = probs
    return out


# ---- sid ---------------------------------------------------------------


def sid_step(
    z_t: GraphInstance,
    denoiser,
    t: float,
    s: float,
    schedule: Schedule,
    noise: NoiseSpec,
    rng: RngStream,
) -> GraphInstance:
    """Predict a clean instance, then re-corrupt it at alpha_s."""
    pred = denoiser.sample_clean(z_t, schedule.alpha(t), rng.child(0))
    if s >= 1.0:
        return pred
    alpha_s = schedule.alpha(s)
    n = pred.n
    x = np.empty(n, dtype=np.int64)
    for i in range(n):
        law = noise_element_law(int(pred.node_labels[i]), alpha_s, noise.node_q0)
        x[i] = sample_index(law.probs, rng.child(1, 0, i).uniform())
    iu, ju = upper_indices(n)
    upper = np.empty(iu.size, dtype=np.int64)
    for k in range(iu.size):
        law = noise_element_law(int(pred.edge_labels[iu[k], ju[k]]), alpha_s, noise.edge_q0)
        upper[k] = sample_index(law.probs, rng.child(1, 1, int(iu[k]), int(ju[k])).uniform())
    return GraphInstance.from_upper(x, upper)


def sid_step_law(
    z_t: GraphInstance, denoiser, t: float, s: float, schedule: Schedule, noise: NoiseSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-element law of sid_step, composed stage by stage."""
    out = denoiser.predict(z_t, schedule.alpha(t))
    alpha_s = schedule.alpha(s)
    nv, ev = noise.schema.node_vocab, noise.schema.edge_vocab
    node_law = np.zeros((out.node_probs.shape[0], nv))
    for i in range(node_law.shape[0]):
        for v in range(out.node_probs.shape[1]):
            node_law[i] += out.node_probs[i, v] * noise_element_law(v, alpha_s, noise.node_q0).probs
    edge_law = np.zeros((out.edge_probs.shape[0], ev))
    for k in range(edge_law.shape[0]):
        for v in range(out.edge_probs.shape[1]):
            edge_law[k] += out.edge_probs[k, v] * noise_element_law(v, alpha_s, noise.edge_q0).probs
    return node_law, edge_law


def denoising_mixture_law(
    z_t: GraphInstance, denoiser, t: float, s: float, schedule: Schedule, noise: NoiseSpec
) -> tuple[np.ndarray, np.ndarray]:
    """The closed form alpha_s * p_clean + (1 - alpha_s) * q0 per element."""
    out = denoiser.predict(z_t, schedule.alpha(t))
    alpha_s = schedule.alpha(s)
    node_law = alpha_s * _embed_clean(out.node_probs, noise.schema.node_vocab)
    node_law += (1.0 - alpha_s) * noise.node_q0.probs
    edge_law = alpha_s * _embed_clean(out.edge_probs, noise.schema.edge_vocab)
    edge_law += (1.0 - alpha_s) * noise.edge_q0.probs
    return node_law, edge_law


# ---- corrector ---------------------------------------------------------


def corrector_step_maximal(
    z_t: GraphInstance,
    denoiser,
    t: float,
    s: float,
    schedule: Schedule,
    noise: NoiseSpec,
    rng: RngStream,
) -> GraphInstance:
    """Backward all the way to clean, then forward-corrupt down to s."""
    pred = denoiser.sample_clean(z_t, schedule.alpha(t), rng.child(0))
    if s >= 1.0:
        return pred
    corrupted, _ = noise_graph_at_alpha(pred, schedule.alpha(s), noise, rng.child(1))
    return corrupted


def corrector_step_law(
    z_t: GraphInstance, denoiser, t: float, s: float, schedule: Schedule, noise: NoiseSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Exact law of the maximal corrector step: prediction marginals pushed
    through the forward corruption kernel."""
    out = denoiser.predict(z_t, schedule.alpha(t))
    alpha_s = schedule.alpha(s)
    nv, ev = noise.schema.node_vocab, noise.schema.edge_vocab
    node_law = np.zeros((out.node_probs.shape[0], nv))
    for v in range(out.node_probs.shape[1]):
        kernel = noise_element_law(v, alpha_s, noise.node_q0).probs
        node_law += out.node_probs[:, v : v + 1] * kernel
    edge_law = np.zeros((out.edge_probs.shape[0], ev))
    for v in range(out.edge_probs.shape[1]):
        kernel = noise_element_law(v, alpha_s, noise.edge_q0).probs
        edge_law += out.edge_probs[:, v : v + 1] * kernel
    return node_law, edge_law


# ---- ddm ---------------------------------------------------------------


def ddm_posterior(
    z_t_label: int, z1_label: int, alpha_t: float, alpha_s: float, q0: np.ndarray
) -> np.ndarray:
    """Distribution of z_s given (z_t, z1) under the Markov forward process.

    Proportional to q(z_t | z_s) q(z_s | z1). If the pair has zero joint
    likelihood (possible only when q0 lacks full support, i.e. mask
    noise), fall back to keeping z_t, which preserves the absorbing-chain
    semantics.
    """
    k = q0.size
    ratio = 0.0 if alpha_s <= 0.0 else alpha_t / alpha_s
    f1 = np.full(k, (1.0 - ratio) * q0[z_t_label])
    f1[z_t_label] += ratio
    f2 = (1.0 - alpha_s) * q0.copy()
    f2[z1_label] += alpha_s
    numer = f1 * f2
    total = numer.sum()
    if total <= 0.0:
        out = np.zeros(k)
        out[z_t_label] = 1.0
        return out
    return numer / total


def ddm_exact_step(
    z_t: GraphInstance,
    denoiser,
    t: float,
    s: float,
    schedule: Schedule,
    noise: NoiseSpec,
    rng: RngStream,
) -> GraphInstance:
    alpha_t, alpha_s = schedule.alpha(t), schedule.alpha(s)
    z1 = denoiser.sample_clean(z_t, alpha_t, rng.child(0))
    n = z_t.n
    x = np.empty(n, dtype=np.int64)
    for i in range(n):
        post = ddm_posterior(
            int(z_t.node_labels[i]), int(z1.node_labels[i]), alpha_t, alpha_s, noise.node_q0.probs
        )
        x[i] = sample_index(post, rng.child(1, 0, i).uniform())
    iu, ju = upper_indices(n)
    upper = np.empty(iu.size, dtype=np.int64)
    z1_upper = z1.upper_edges()
    for k in range(iu.size):
        post = ddm_posterior(
            int(z_t.edge_labels[iu[k], ju[k]]), int(z1_upper[k]), alpha_t, alpha_s, noise.edge_q0.probs
        )
        upper[k] = sample_index(post, rng.child(1, 1, int(iu[k]), int(ju[k])).uniform())
    return GraphInstance.from_upper(x, upper)


def ddm_step_law(
    z_t: GraphInstance, denoiser, t: float, s: float, schedule: Schedule, noise: NoiseSpec
) -> tuple[np.ndarray, np.ndarray]:
    out = denoiser.predict(z_t, schedule.alpha(t))
    alpha_t, alpha_s = schedule.alpha(t), schedule.alpha(s)
    nv, ev = noise.schema.node_vocab, noise.schema.edge_vocab
    node_law = np.zeros((out.node_probs.shape[0], nv))
    for i in range(node_law.shape[0]):
        for v in range(out.node_probs.shape[1]):
            node_law[i] += out.node_probs[i, v] * ddm_posterior(
                int(z_t.node_labels[i]), v, alpha_t, alpha_s, noise.node_q0.probs
            )
    iu, ju = upper_indices(z_t.n)
    edge_law = np.zeros((out.edge_probs.shape[0], ev))
    for k in range(edge_law.shape[0]):
        for v in range(out.edge_probs.shape[1]):
            edge_law[k] += out.edge_probs[k, v] * ddm_posterior(
                int(z_t.edge_labels[iu[k], ju[k]]), v, alpha_t, alpha_s, noise.edge_q0.probs
            )
    return node_law, edge_law


# ---- dfm ---------------------------------------------------------------


def dfm_move_probability(t: float, dt: float, schedule: Schedule) -> float:
    """dt * alpha_dot / (1 - alpha), clamped into [0, 1]."""
    if t + dt >= 1.0:
        return 1.0  # final step resolves to a full resample
    alpha_t = schedule.alpha(t)
    if alpha_t >= 1.0:
        raise ValueError("rate step undefined at alpha = 1")
    return min(dt * schedule.alpha_dot(t) / (1.0 - alpha_t), 1.0)


def dfm_rate_step(
    z_t: GraphInstance,
    denoiser,
    t: float,
    dt: float,
    schedule: Schedule,
    noise: NoiseSpec,
    rng: RngStream,
) -> GraphInstance:
    move = dfm_move_probability(t, dt, schedule)
    z1 = denoiser.sample_clean(z_t, schedule.alpha(t), rng.child(0))
    n = z_t.n
    x = z_t.node_labels.copy()
    for i in range(n):
        if rng.child(1, 0, i).uniform() < move:
            x[i] = z1.node_labels[i]
    iu, ju = upper_indices(n)
    upper = z_t.upper_edges().copy()
    z1_upper = z1.upper_edges()
    for k in range(iu.size):
        if rng.child(1, 1, int(iu[k]), int(ju[k])).uniform() < move:
            upper[k] = z1_upper[k]
    return GraphInstance.from_upper(x, upper)


def dfm_step_law(
    z_t: GraphInstance, denoiser, t: float, dt: float, schedule: Schedule, noise: NoiseSpec
) -> tuple[np.ndarray, np.ndarray]:
    out = denoiser.predict(z_t, schedule.alpha(t))
    move = dfm_move_probability(t, dt, schedule)
    nv, ev = noise.schema.node_vocab, noise.schema.edge_vocab
    node_law = move * _embed_clean(out.node_probs, nv)
    node_law[np.arange(z_t.n), z_t.node_labels] += 1.0 - move
    edge_law = move * _embed_clean(out.edge_probs, ev)
    edge_law[np.arange(edge_law.shape[0]), z_t.upper_edges()] += 1.0 - move
    return node_law, edge_law


# ---- generation --------------------------------------------------------


def initial_noise(n: int, noise: NoiseSpec, rng: RngStream) -> GraphInstance:
    """Draw the all-noise starting state; all-MASK under mask noise."""
    if noise.kind == MASK:
        x = np.full(n, noise.schema.node_mask, dtype=np.int64)
        upper = np.full(n * (n - 1) // 2, noise.schema.edge_mask, dtype=np.int64)
        return GraphInstance.from_upper(x, upper)
    x = np.empty(n, dtype=np.int64)
    for i in range(n):
        x[i] = sample_index(noise.node_q0.probs, rng.child(0, i).uniform())
    iu, ju = upper_indices(n)
    upper = np.empty(iu.size, dtype=np.int64)
    for k in range(iu.size):
        upper[k] = sample_index(noise.edge_q0.probs, rng.child(1, int(iu[k]), int(ju[k])).uniform())
    return GraphInstance.from_upper(x, upper)


def _one_step(kind: str, z, denoiser, t, s, dt, schedule, noise, rng):
    if kind == SID:
        return sid_step(z, denoiser, t, s, schedule, noise, rng)
    if kind == CORRECTOR:
        return corrector_step_maximal(z, denoiser, t, s, schedule, noise, rng)
    if kind == DDM_EXACT:
        return ddm_exact_step(z, denoiser, t, s, schedule, noise, rng)
    if kind == DFM_RATE:
        return dfm_rate_step(z, denoiser, t, dt, schedule, noise, rng)
    raise ValueError(kind)


def generate(
    denoiser,
    sampler: SamplerSpec,
    count: int,
    n_sampler: Callable[[RngStream], int],
    rng: RngStream,
) -> list[GraphInstance]:
    """Run ``count`` independent chains over the T-step grid.

    Each chain owns a child stream, so chains are order-independent and
    every sample depends only on (seed, chain index).
    """
    if count < 1:
        raise ValueError("count must be positive")
    out = []
    schema = sampler.noise.schema
    for c in range(count):
        chain = rng.child(c)
        n = int(n_sampler(chain.child(0)))
        z = initial_noise(n, sampler.noise, chain.child(1))
        for k in range(sampler.T):
            t = k / sampler.T
            s = (k + 1) / sampler.T
            z = _one_step(
                sampler.kind, z, denoiser, t, s, sampler.dt, sampler.schedule,
                sampler.noise, chain.child(2, k),
            )
        if sampler.kind in (DDM_EXACT, DFM_RATE) and schema.has_mask:
            if np.any(z.node_labels >= schema.d_x) or np.any(z.upper_edges() >= schema.d_e):
                raise MaskResidueError(f"chain {c} kept MASK labels at t=1")
        out.append(z)
    return out
