"""Denoisers: models of the clean-data posterior given a corrupted graph.

Every denoiser maps (noisy graph, alpha) to per-slot categorical
distributions over clean labels; MASK never receives output mass. Two
learned families are provided, a bucketed tabular model for enumerable
schemas and the message-passing network, both trained by minimizing the
node/edge weighted negative log-likelihood with momentum SGD.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dists import sample_index
from .graphs import GraphInstance, GraphSchema, upper_indices
from .mpnn import MpnnConfig, MpnnCore, Params, one_hot_graph_features
from .noising import NoiseSpec, noise_graph
from .rng import RngStream
from .schedule import Schedule

LOG_FLOOR = 1e-12

MODEL_FORMAT = "sidlab-model"
MODEL_VERSION = 1


class TrainingDivergedError(Exception):
    pass


@dataclass(frozen=True)
class DenoiserOutput:
    """Per-slot clean-label distributions: rows are nodes then row-major
    upper-triangular edges."""

    node_probs: np.ndarray  # (n, d_x)
    edge_probs: np.ndarray  # (m, d_e)

    def __post_init__(self):
        for p in (self.node_probs, self.edge_probs):
            if p.size and (np.any(p < -1e-12) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9):
                raise ValueError("rows must be probability vectors")

    @property
    def n(self) -> int:
        return self.node_probs.shape[0]


def default_gamma(g: GraphInstance) -> float:
    """Node weight n/(n+m); nodes and edge slots then contribute evenly."""
    n = g.n
    m = n * (n - 1) // 2
    return n / (n + m)


def sample_prediction(out: DenoiserOutput, rng: RngStream) -> GraphInstance:
    """Draw one clean instance from per-slot prediction marginals.

    This is the joint law of every factorized denoiser; exact-posterior
    denoisers override ``sample_clean`` with a correlated draw instead.
    """
    n = out.n
    x = np.empty(n, dtype=np.int64)
    for i in range(n):
        x[i] = sample_index(out.node_probs[i], rng.child(0, i).uniform())
    iu, ju = upper_indices(n)
    upper = np.empty(iu.size, dtype=np.int64)
    for k in range(iu.size):
        upper[k] = sample_index(out.edge_probs[k], rng.child(1, int(iu[k]), int(ju[k])).uniform())
    return GraphInstance.from_upper(x, upper)


def nll_loss(output: DenoiserOutput, g1: GraphInstance, gamma: float) -> float:
    """gamma-weighted negative log-likelihood of the clean labels."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    n = g1.n
    pn = output.node_probs[np.arange(n), g1.node_labels]
    pe = output.edge_probs[np.arange(output.edge_probs.shape[0]), g1.upper_edges()]
    node_term = -np.log(np.maximum(pn, LOG_FLOOR)).sum()
    edge_term = -np.log(np.maximum(pe, LOG_FLOOR)).sum()
    return gamma * node_term + (1.0 - gamma) * edge_term


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _ce_seed(probs: np.ndarray, targets: np.ndarray, weight: float) -> np.ndarray:
    """Adjoint of the clamped NLL with respect to the logits."""
    seed = probs.copy()
    rows = np.arange(targets.size)
    seed[rows, targets] -= 1.0
    active = probs[rows, targets] >= LOG_FLOOR  # clamped terms are flat
    return weight * seed * active[:, None]


def _nll_from_probs(probs: np.ndarray, targets: np.ndarray) -> float:
    p = probs[np.arange(targets.size), targets]
    return float(-np.log(np.maximum(p, LOG_FLOOR)).sum())


@dataclass
class TabularDenoiser:
    """Lookup-table denoiser over local slot patterns.

    Buckets key on (slot kind, observed label, number of masked labels in
    the slot's immediate neighborhood); the observed label is needed so
    an uncorrupted slot can learn to copy itself through.
    """

    kind = "tabular"

    schema: GraphSchema
    params: Params

    @classmethod
    def create(cls, schema: GraphSchema) -> "TabularDenoiser":
        node_ctx = schema.n_max  # masked incident edges: 0 .. n_max-1
        p = Params(
            ["node_table", "edge_table"],
            {
                "node_table": np.zeros((schema.node_vocab, node_ctx, schema.d_x)),
                "edge_table": np.zeros((schema.edge_vocab, 3, schema.d_e)),
            },
        )
        return cls(schema=schema, params=p)

    def _buckets(self, z_t: GraphInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        schema = self.schema
        n = z_t.n
        if schema.has_mask:
            edge_masked = z_t.edge_labels == schema.edge_mask
            np.fill_diagonal(edge_masked, False)
            node_ctx = edge_masked.sum(axis=1)
            node_masked = z_t.node_labels == schema.node_mask
        else:
            node_ctx = np.zeros(n, dtype=np.int64)
            node_masked = np.zeros(n, dtype=bool)
        node_ctx = np.minimum(node_ctx, schema.n_max - 1)
        iu, ju = upper_indices(n)
        edge_ctx = node_masked[iu].astype(np.int64) + node_masked[ju].astype(np.int64)
        return z_t.node_labels, node_ctx, z_t.upper_edges(), edge_ctx

    def predict(self, z_t: GraphInstance, alpha: float) -> DenoiserOutput:
        nb, nc, eb, ec = self._buckets(z_t)
        node_logits = self.params["node_table"][nb, nc]
        edge_logits = self.params["edge_table"][eb, ec]
        return DenoiserOutput(_softmax(node_logits), _softmax(edge_logits))

    def example_grad(
        self,
        z_t: GraphInstance,
        alpha: float,
        g1: GraphInstance,
        gamma: float,
        grads: Params,
        scale: float,
    ) -> float:
        nb, nc, eb, ec = self._buckets(z_t)
        pn = _softmax(self.params["node_table"][nb, nc])
        pe = _softmax(self.params["edge_table"][eb, ec])
        sn = _ce_seed(pn, g1.node_labels, scale * gamma)
        se = _ce_seed(pe, g1.upper_edges(), scale * (1.0 - gamma))
        np.add.at(grads["node_table"], (nb, nc), sn)
        np.add.at(grads["edge_table"], (eb, ec), se)
        return gamma * _nll_from_probs(pn, g1.node_labels) + (1.0 - gamma) * _nll_from_probs(
            pe, g1.upper_edges()
        )

    def sample_clean(self, z_t: GraphInstance, alpha: float, rng: RngStream) -> GraphInstance:
        return sample_prediction(self.predict(z_t, alpha), rng)


@dataclass
class MpnnDenoiser:
    """Message-passing denoiser; alpha is broadcast to every node input."""

    kind = "mpnn"

    schema: GraphSchema
    config: MpnnConfig
    params: Params
    core: MpnnCore = field(repr=False, default=None)

    def __post_init__(self):
        if self.core is None:
            self.core = MpnnCore(
                node_in=self.schema.node_vocab + 1,
                edge_in=self.schema.edge_vocab,
                node_out=self.schema.d_x,
                edge_out=self.schema.d_e,
                config=self.config,
            )

    @classmethod
    def create(cls, schema: GraphSchema, config: MpnnConfig, rng: RngStream) -> "MpnnDenoiser":
        model = cls(schema=schema, config=config, params=None)
        model.params = model.core.init_params(rng)
        return model

    def _features(self, z_t: GraphInstance, alpha: float):
        if np.any(z_t.node_labels >= self.schema.node_vocab) or np.any(
            z_t.edge_labels >= self.schema.edge_vocab
        ):
            raise ValueError("instance labels exceed the model's vocabulary")
        return one_hot_graph_features(z_t, self.schema.node_vocab, self.schema.edge_vocab, alpha)

    def predict(self, z_t: GraphInstance, alpha: float) -> DenoiserOutput:
        x_feat, e_feat = self._features(z_t, alpha)
        node_logits, edge_logits, _ = self.core.forward(self.params, x_feat, e_feat)
        return DenoiserOutput(_softmax(node_logits), _softmax(edge_logits))

    def example_grad(
        self,
        z_t: GraphInstance,
        alpha: float,
        g1: GraphInstance,
        gamma: float,
        grads: Params,
        scale: float,
    ) -> float:
        x_feat, e_feat = self._features(z_t, alpha)
        node_logits, edge_logits, cache = self.core.forward(self.params, x_feat, e_feat)
        pn = _softmax(node_logits)
        pe = _softmax(edge_logits)
        sn = _ce_seed(pn, g1.node_labels, scale * gamma)
        se = _ce_seed(pe, g1.upper_edges(), scale * (1.0 - gamma))
        self.core.backward(self.params, cache, sn, se, grads)
        return gamma * _nll_from_probs(pn, g1.node_labels) + (1.0 - gamma) * _nll_from_probs(
            pe, g1.upper_edges()
        )

    def sample_clean(self, z_t: GraphInstance, alpha: float, rng: RngStream) -> GraphInstance:
        return sample_prediction(self.predict(z_t, alpha), rng)


def gradient(model, batch: list, gamma: float | None = None) -> Params:
    """Exact reverse-mode gradient of the batch-mean loss.

    ``batch`` holds prepared (z_t, alpha, g1) triples; an empty batch
    yields the zero vector.
    """
    grads = model.params.zeros_like()
    if not batch:
        return grads
    scale = 1.0 / len(batch)
    for z_t, alpha, g1 in batch:
        gm = default_gamma(g1) if gamma is None else gamma
        model.example_grad(z_t, alpha, g1, gm, grads, scale)
    return grads


def batch_loss(model, batch: list, gamma: float | None = None) -> float:
    if not batch:
        return 0.0
    total = 0.0
    for z_t, alpha, g1 in batch:
        gm = default_gamma(g1) if gamma is None else gamma
        total += nll_loss(model.predict(z_t, alpha), g1, gm)
    return total / len(batch)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    lr: float = 2e-4
    momentum: float = 0.9
    holdout_fraction: float = 0.0


def _prepare_example(g1: GraphInstance, schedule: Schedule, spec: NoiseSpec, ex_rng: RngStream):
    t = ex_rng.uniform()
    z_t, _ = noise_graph(g1, t, schedule, spec, ex_rng.child(1))
    return z_t, schedule.alpha(t), g1


def train_denoiser(
    dataset: list[GraphInstance],
    model,
    config: TrainConfig,
    schedule: Schedule,
    spec: NoiseSpec,
    rng: RngStream,
) -> list[dict]:
    """Momentum-SGD training of the weighted NLL; returns per-epoch history.

    Each example draws its own time t uniformly and corrupts the graph
    afresh, so every epoch sees new noise. Gradients are reduced in a
    fixed order for determinism.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    n_hold = int(len(dataset) * config.holdout_fraction)
    order = rng.child(0).permutation(len(dataset))
    holdout = [dataset[i] for i in order[:n_hold]]
    train = [dataset[i] for i in order[n_hold:]]
    velocity = model.params.zeros_like()
    history: list[dict] = []
    for epoch in range(config.epochs):
        perm = rng.child(1, epoch).permutation(len(train))
        epoch_loss = 0.0
        seen = 0
        for start in range(0, len(train), config.batch_size):
            idx = perm[start : start + config.batch_size]
            grads = model.params.zeros_like()
            scale = 1.0 / idx.size
            for pos, i in enumerate(idx):
                ex_rng = rng.child(2, epoch, start + pos)
                z_t, alpha, g1 = _prepare_example(train[i], schedule, spec, ex_rng)
                loss = model.example_grad(z_t, alpha, g1, default_gamma(g1), grads, scale)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, example {i}"
                    )
                epoch_loss += loss
                seen += 1
            velocity.scale(config.momentum)
            velocity.add_scaled(grads, 1.0)
            model.params.add_scaled(velocity, -config.lr)
        if not model.params.all_finite():
            raise TrainingDivergedError(f"non-finite parameters after epoch {epoch}")
        row = {"epoch": epoch, "train_loss": epoch_loss / max(seen, 1)}
        if holdout:
            hold_rng = rng.child(3, epoch)
            batch = [
                _prepare_example(g, schedule, spec, hold_rng.child(k))
                for k, g in enumerate(holdout)
            ]
            row["holdout_loss"] = batch_loss(model, batch)
        history.append(row)
    return history


# ---- persistence -------------------------------------------------------


def _schema_dict(schema: GraphSchema) -> dict:
    return {
        "d_x": schema.d_x,
        "d_e": schema.d_e,
        "has_mask": schema.has_mask,
        "n_min": schema.n_min,
        "n_max": schema.n_max,
    }


def _schema_from(d: dict) -> GraphSchema:
    return GraphSchema(d["d_x"], d["d_e"], d["has_mask"], d["n_min"], d["n_max"])


def save_model(path, model) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "kind": model.kind,
        "schema": _schema_dict(model.schema),
        "params": model.params.to_vector().tolist(),
    }
    if model.kind == "mpnn":
        doc["config"] = {"hidden": model.config.hidden, "layers": model.config.layers}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"not a {MODEL_FORMAT} file: {path}")
    schema = _schema_from(doc["schema"])
    kind = doc["kind"]
    if kind == "tabular":
        model = TabularDenoiser.create(schema)
    elif kind == "mpnn":
        cfg = MpnnConfig(doc["config"]["hidden"], doc["config"]["layers"])
        model = MpnnDenoiser(schema=schema, config=cfg, params=None)
        model.params = model.core.init_params(RngStream(0))
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    model.params.from_vector(np.asarray(doc["params"], dtype=np.float64))
    return model
