"""The critic: per-element estimates of the keep probability.

Given a predicted clean instance, the critic scores each element with
the probability that it came through from the data rather than from the
denoiser. Throughout this module ``alpha_hat`` is that KEEP probability;
the re-mask probability is ``1 - alpha_hat``.

Models are residual: alpha_hat = sigmoid(f(Z_hat, alpha) + logit(alpha)),
so a zero model reproduces the schedule exactly and training only has to
learn the log density ratio. The closed-form optimum is

    alpha * p_data / (alpha * p_data + (1 - alpha) * p_pred)

whose residual logit is log(p_data / p_pred).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .denoiser import (
    MODEL_FORMAT,
    MODEL_VERSION,
    DenoiserOutput,
    TrainConfig,
    TrainingDivergedError,
    _schema_dict,
    _schema_from,
)
from .graphs import CorruptionMask, GraphInstance, GraphSchema, upper_indices
from .mpnn import MpnnConfig, MpnnCore, Params, one_hot_graph_features
from .noising import MASK, NoiseSpec, noise_graph
from .rng import RngStream
from .schedule import Schedule

ALPHA_CLAMP = 1e-6


class UndefinedCriticError(Exception):
    """Both densities vanish; the optimal critic is 0/0."""


def optimal_critic(p_data: float, p_pred: float, alpha: float) -> float:
    """Closed-form optimal keep probability for one element."""
    if p_data < 0 or p_pred < 0:
        raise ValueError("densities must be non-negative")
    if p_data == 0 and p_pred == 0:
        raise UndefinedCriticError("optimal critic undefined when both densities vanish")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    num = alpha * p_data
    den = num + (1.0 - alpha) * p_pred
    if den == 0.0:
        raise UndefinedCriticError("degenerate alpha/density combination")
    return num / den


def _logit(alpha: float) -> float:
    a = min(max(alpha, ALPHA_CLAMP), 1.0 - ALPHA_CLAMP)
    return math.log(a / (1.0 - a))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


@dataclass(frozen=True)
class CriticOutput:
    """Per-element keep probabilities, nodes then upper-triangular edges."""

    node_alpha: np.ndarray
    edge_alpha: np.ndarray

    def __post_init__(self):
        for a in (self.node_alpha, self.edge_alpha):
            if a.size and (np.any(a <= 0.0) or np.any(a >= 1.0)):
                raise ValueError("keep probabilities must lie strictly inside (0, 1)")


@dataclass
class TabularCritic:
    """Residual logit per (slot kind, label value).

    Richer buckets would entangle the learned value with the schedule
    through the surrounding context, so the table is deliberately local.
    """

    trunk = "tabular"

    schema: GraphSchema
    params: Params

    @classmethod
    def create(cls, schema: GraphSchema) -> "TabularCritic":
        p = Params(
            ["node_logits", "edge_logits"],
            {"node_logits": np.zeros(schema.d_x), "edge_logits": np.zeros(schema.d_e)},
        )
        return cls(schema=schema, params=p)

    def residual_logits(self, z_hat: GraphInstance, alpha: float):
        node_f = self.params["node_logits"][z_hat.node_labels]
        edge_f = self.params["edge_logits"][z_hat.upper_edges()]
        return node_f, edge_f, None

    def accumulate(self, cache, z_hat, d_node: np.ndarray, d_edge: np.ndarray, grads: Params):
        np.add.at(grads["node_logits"], z_hat.node_labels, d_node)
        np.add.at(grads["edge_logits"], z_hat.upper_edges(), d_edge)


@dataclass
class MpnnCritic:
    """Message-passing trunk with scalar heads for nodes and edges."""

    trunk = "mpnn"

    schema: GraphSchema
    config: MpnnConfig
    params: Params
    core: MpnnCore = field(repr=False, default=None)

    def __post_init__(self):
        if self.core is None:
            # inputs are predicted clean graphs: no MASK slot in the vocabulary
            self.core = MpnnCore(
                node_in=self.schema.d_x + 1,
                edge_in=self.schema.d_e,
                node_out=1,
                edge_out=1,
                config=self.config,
            )

    @classmethod
    def create(cls, schema: GraphSchema, config: MpnnConfig, rng: RngStream) -> "MpnnCritic":
        model = cls(schema=schema, config=config, params=None)
        model.params = model.core.init_params(rng)
        return model

    def residual_logits(self, z_hat: GraphInstance, alpha: float):
        if np.any(z_hat.node_labels >= self.schema.d_x) or np.any(
            z_hat.edge_labels >= self.schema.d_e
        ):
            raise ValueError("critic input must be a clean instance")
        x_feat, e_feat = one_hot_graph_features(z_hat, self.schema.d_x, self.schema.d_e, alpha)
        node_f, edge_f, cache = self.core.forward(self.params, x_feat, e_feat)
        return node_f[:, 0], edge_f[:, 0], cache

    def accumulate(self, cache, z_hat, d_node: np.ndarray, d_edge: np.ndarray, grads: Params):
        self.core.backward(self.params, cache, d_node[:, None], d_edge[:, None], grads)


def critic_forward(model, z_hat: GraphInstance, alpha: float) -> CriticOutput:
    """Keep probabilities sigma(f + logit(alpha)); a zero model returns alpha."""
    node_f, edge_f, _ = model.residual_logits(z_hat, alpha)
    base = _logit(alpha)
    # keep the open interval even when the sigmoid saturates in float
    lo, hi = 1e-15, 1.0 - 1e-12
    return CriticOutput(
        np.clip(_sigmoid(node_f + base), lo, hi), np.clip(_sigmoid(edge_f + base), lo, hi)
    )


def critic_alpha_hat(model, z_hat: GraphInstance, alpha_feat: float, alpha_base: float):
    """Inference form: features at the current level, base logit at the next."""
    node_f, edge_f, _ = model.residual_logits(z_hat, alpha_feat)
    base = _logit(alpha_base)
    return _sigmoid(node_f + base), _sigmoid(edge_f + base)


# ---- training ----------------------------------------------------------


def make_critic_training_example(
    g1: GraphInstance,
    t: float,
    schedule: Schedule,
    spec: NoiseSpec,
    denoiser,
    rng: RngStream,
) -> tuple[GraphInstance, CorruptionMask]:
    """One (predicted instance, keep labels) pair.

    Corrupt the clean graph, keep untouched elements as they are, fill
    corrupted ones with denoiser samples; the keep indicators from the
    corruption are the supervision targets.
    """
    if spec.kind != MASK:
        raise ValueError("critic training is defined for mask noise")
    z_t, kept = noise_graph(g1, t, schedule, spec, rng.child(0))
    z_hat = _fill_prediction(z_t, kept, denoiser, schedule.alpha(t), rng.child(1))
    return z_hat, kept


def _fill_prediction(
    z_t: GraphInstance, kept: CorruptionMask, denoiser, alpha: float, rng: RngStream
) -> GraphInstance:
    """Kept elements pass through; corrupted ones take the denoiser's clean
    sample (one joint draw, which for factorized models is per-slot)."""
    pred = denoiser.sample_clean(z_t, alpha, rng)
    x = np.where(kept.node_flags, z_t.node_labels, pred.node_labels)
    upper = np.where(kept.upper_flags(), z_t.upper_edges(), pred.upper_edges())
    return GraphInstance.from_upper(x, upper)


def critic_example_grad(
    model, z_hat: GraphInstance, alpha: float, kept: CorruptionMask, grads: Params, scale: float
) -> float:
    """Binary cross-entropy over all elements; returns the example loss."""
    node_f, edge_f, cache = model.residual_logits(z_hat, alpha)
    base = _logit(alpha)
    xn = node_f + base
    xe = edge_f + base
    yn = kept.node_flags.astype(np.float64)
    ye = kept.upper_flags().astype(np.float64)
    loss = float((yn * _softplus(-xn) + (1 - yn) * _softplus(xn)).sum())
    loss += float((ye * _softplus(-xe) + (1 - ye) * _softplus(xe)).sum())
    if grads is not None:
        model.accumulate(cache, z_hat, scale * (_sigmoid(xn) - yn), scale * (_sigmoid(xe) - ye), grads)
    return loss


def critic_gradient(model, batch: list) -> Params:
    """Gradient of the batch-mean BCE over prepared (z_hat, alpha, kept) triples."""
    grads = model.params.zeros_like()
    if not batch:
        return grads
    scale = 1.0 / len(batch)
    for z_hat, alpha, kept in batch:
        critic_example_grad(model, z_hat, alpha, kept, grads, scale)
    return grads


def train_critic(
    dataset: list[GraphInstance],
    denoiser,
    critic,
    config: TrainConfig,
    schedule: Schedule,
    spec: NoiseSpec,
    rng: RngStream,
) -> list[dict]:
    """Fit the critic against a frozen denoiser; the denoiser is never updated."""
    if not dataset:
        raise ValueError("dataset must be non-empty")
    velocity = critic.params.zeros_like()
    history = []
    for epoch in range(config.epochs):
        perm = rng.child(1, epoch).permutation(len(dataset))
        epoch_loss, seen = 0.0, 0
        for start in range(0, len(dataset), config.batch_size):
            idx = perm[start : start + config.batch_size]
            grads = critic.params.zeros_like()
            scale = 1.0 / idx.size
            for pos, i in enumerate(idx):
                ex_rng = rng.child(2, epoch, start + pos)
                t = ex_rng.uniform()
                z_hat, kept = make_critic_training_example(
                    dataset[i], t, schedule, spec, denoiser, ex_rng.child(1)
                )
                loss = critic_example_grad(critic, z_hat, schedule.alpha(t), kept, grads, scale)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite critic loss at epoch {epoch}")
                epoch_loss += loss
                seen += 1
            velocity.scale(config.momentum)
            velocity.add_scaled(grads, 1.0)
            critic.params.add_scaled(velocity, -config.lr)
        if not critic.params.all_finite():
            raise TrainingDivergedError(f"non-finite critic parameters after epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": epoch_loss / max(seen, 1)})
    return history


# ---- CID sampling ------------------------------------------------------


def cid_step(
    z_t: GraphInstance,
    a_t: CorruptionMask,
    denoiser,
    critic,
    t: float,
    dt: float,
    schedule: Schedule,
    spec: NoiseSpec,
    rng: RngStream,
) -> tuple[GraphInstance, CorruptionMask]:
    """One critic-guided step: predict, score, re-mask.

    Keep probabilities come from the critic evaluated on the prediction
    at the current level with the next level's base logit.
    """
    if spec.kind != MASK:
        raise ValueError("critic-guided sampling runs on mask noise")
    s = t + dt
    z_hat = _fill_prediction(z_t, a_t, denoiser, schedule.alpha(t), rng.child(0))
    if s >= 1.0:
        return z_hat, CorruptionMask.all_kept(z_t.n)
    node_keep, edge_keep = critic_alpha_hat(critic, z_hat, schedule.alpha(t), schedule.alpha(s))
    n = z_t.n
    x = z_hat.node_labels.copy()
    node_flags = np.empty(n, dtype=bool)
    for i in range(n):
        node_flags[i] = rng.child(1, 0, i).uniform() < node_keep[i]
        if not node_flags[i]:
            x[i] = spec.schema.node_mask
    iu, ju = upper_indices(n)
    upper = z_hat.upper_edges().copy()
    edge_flags = np.empty(iu.size, dtype=bool)
    for k in range(iu.size):
        edge_flags[k] = rng.child(1, 1, int(iu[k]), int(ju[k])).uniform() < edge_keep[k]
        if not edge_flags[k]:
            upper[k] = spec.schema.edge_mask
    return GraphInstance.from_upper(x, upper), CorruptionMask.from_upper(node_flags, edge_flags)


def cid_generate(
    denoiser,
    critic,
    T: int,
    count: int,
    n_sampler,
    schedule: Schedule,
    spec: NoiseSpec,
    rng: RngStream,
) -> list[GraphInstance]:
    from .samplers import initial_noise

    out = []
    for c in range(count):
        chain = rng.child(c)
        n = int(n_sampler(chain.child(0)))
        z = initial_noise(n, spec, chain.child(1))
        a = CorruptionMask.none_kept(n)
        for k in range(T):
            z, a = cid_step(z, a, denoiser, critic, k / T, 1.0 / T, schedule, spec, chain.child(2, k))
        out.append(z)
    return out


def cid_zero_critic_law(
    z_t: GraphInstance,
    a_t: CorruptionMask,
    denoiser,
    t: float,
    dt: float,
    schedule: Schedule,
    spec: NoiseSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-element law of cid_step with an all-zero critic."""
    alpha_s = schedule.alpha(t + dt)
    out = denoiser.predict(z_t, schedule.alpha(t))
    return _factored_mask_law(z_t, a_t, out, alpha_s, spec)


def factored_mask_sid_law(
    z_t: GraphInstance,
    a_t: CorruptionMask,
    denoiser,
    t: float,
    dt: float,
    schedule: Schedule,
    spec: NoiseSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Mask-noise sid step law with factored bookkeeping: kept elements pass
    through, corrupted ones follow the prediction, then everything is
    re-masked at alpha_s."""
    alpha_s = schedule.alpha(t + dt)
    out = denoiser.predict(z_t, schedule.alpha(t))
    return _factored_mask_law(z_t, a_t, out, alpha_s, spec)


def _factored_mask_law(z_t, a_t, out: DenoiserOutput, alpha_s: float, spec: NoiseSpec):
    schema = spec.schema
    nv, ev = schema.node_vocab, schema.edge_vocab
    n = z_t.n
    node_law = np.zeros((n, nv))
    for i in range(n):
        if a_t.node_flags[i]:
            node_law[i, z_t.node_labels[i]] = alpha_s
        else:
            node_law[i, : schema.d_x] = alpha_s * out.node_probs[i]
        node_law[i, schema.node_mask] += 1.0 - alpha_s
    m = n * (n - 1) // 2
    edge_law = np.zeros((m, ev))
    kept_upper = a_t.upper_flags()
    upper = z_t.upper_edges()
    for k in range(m):
        if kept_upper[k]:
            edge_law[k, upper[k]] = alpha_s
        else:
            edge_law[k, : schema.d_e] = alpha_s * out.edge_probs[k]
        edge_law[k, schema.edge_mask] += 1.0 - alpha_s
    return node_law, edge_law


# ---- persistence -------------------------------------------------------


def save_critic(path, model) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": "critic",
        "trunk": model.trunk,
        "schema": _schema_dict(model.schema),
        "params": model.params.to_vector().tolist(),
    }
    if model.trunk == "mpnn":
        doc["config"] = {"hidden": model.config.hidden, "layers": model.config.layers}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_critic(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT or doc.get("kind") != "critic":
        raise ValueError(f"not a critic model file: {path}")
    schema = _schema_from(doc["schema"])
    if doc["trunk"] == "tabular":
        model = TabularCritic.create(schema)
    elif doc["trunk"] == "mpnn":
        cfg = MpnnConfig(doc["config"]["hidden"], doc["config"]["layers"])
        model = MpnnCritic(schema=schema, config=cfg, params=None)
        model.params = model.core.init_params(RngStream(0))
    else:
        raise ValueError(f"unknown critic trunk {doc['trunk']!r}")
    model.params.from_vector(np.asarray(doc["params"], dtype=np.float64))
    return model
