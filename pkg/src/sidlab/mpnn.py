"""Equivariant message-passing trunk with a hand-written backward pass.

One layer computes, for every ordered pair (i, j) of distinct nodes,

    h_ij = relu(W_src x_i + W_trg x_j + W_edge e_ij)
    e'_ij = LayerNorm(f_edge(h_ij))
    x'_i  = LayerNorm(x_i + sum_{j != i} f_node(h_ij))

with f_edge and f_node three-layer MLPs. Node vectors have width
``hidden`` and edge vectors ``hidden // 4``. Output heads project nodes
and edges to logits; edge logits are averaged with their transpose so
the two orientations of an unordered pair always agree.

All arithmetic is float64 and the backward pass is exact reverse-mode
differentiation of this forward pass, verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import GraphInstance, upper_indices
from .rng import RngStream

_LN_EPS = 1e-5


class DivergenceError(Exception):
    """Raised when a forward pass produces non-finite values."""


@dataclass(frozen=True)
class MpnnConfig:
    hidden: int
    layers: int

    def __post_init__(self):
        if self.hidden % 4 != 0 or self.hidden < 4:
            raise ValueError("hidden width must be a positive multiple of 4")
        if self.layers < 1:
            raise ValueError("need at least one layer")

    @property
    def edge_hidden(self) -> int:
        return self.hidden // 4


class Params:
    """Ordered named float64 arrays with flat-vector views.

    Flattening order is the registration order (inputs, layers in order,
    heads) with each array in row-major order; this is the order used by
    model files on disk.
    """

    def __init__(self, names: list[str], arrays: dict[str, np.ndarray]):
        self.names = list(names)
        self.arrays = arrays

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def zeros_like(self) -> "Params":
        return Params(self.names, {k: np.zeros_like(v) for k, v in self.arrays.items()})

    def copy(self) -> "Params":
        return Params(self.names, {k: v.copy() for k, v in self.arrays.items()})

    @property
    def size(self) -> int:
        return sum(self.arrays[k].size for k in self.names)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in self.names])

    def from_vector(self, vec: np.ndarray) -> None:
        off = 0
        for k in self.names:
            a = self.arrays[k]
            a[...] = vec[off : off + a.size].reshape(a.shape)
            off += a.size
        if off != vec.size:
            raise ValueError("parameter vector length mismatch")

    def add_scaled(self, other: "Params", scale: float) -> None:
        for k in self.names:
            self.arrays[k] += scale * other.arrays[k]

    def scale(self, c: float) -> None:
        for k in self.names:
            self.arrays[k] *= c

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(self.arrays[k])) for k in self.names)


def normals(rng: RngStream, shape) -> np.ndarray:
    """Box-Muller standard normals from the deterministic stream."""
    n = int(np.prod(shape))
    u = rng.uniforms(2 * ((n + 1) // 2))
    u1, u2 = u[::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.concatenate([r * np.cos(2 * math.pi * u2), r * np.sin(2 * math.pi * u2)])
    return z[:n].reshape(shape)


def one_hot_graph_features(
    g: GraphInstance, node_vocab: int, edge_vocab: int, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Node features are the label one-hot plus the broadcast alpha scalar;
    edge features are the label one-hot for every ordered pair."""
    n = g.n
    x = np.zeros((n, node_vocab + 1))
    x[np.arange(n), g.node_labels] = 1.0
    x[:, -1] = alpha
    e = np.zeros((n, n, edge_vocab))
    idx = np.arange(n)
    e[idx[:, None], idx[None, :], g.edge_labels] = 1.0
    return x, e


class MpnnCore:
    """Trunk plus output heads; stateless apart from configuration."""

    def __init__(self, node_in: int, edge_in: int, node_out: int, edge_out: int, config: MpnnConfig):
        self.node_in = node_in
        self.edge_in = edge_in
        self.node_out = node_out
        self.edge_out = edge_out
        self.config = config

    def _shapes(self) -> list[tuple[str, tuple]]:
        dh, de = self.config.hidden, self.config.edge_hidden
        shapes = [
            ("win_x", (dh, self.node_in)),
            ("bin_x", (dh,)),
            ("win_e", (de, self.edge_in)),
            ("bin_e", (de,)),
        ]
        for l in range(self.config.layers):
            shapes += [
                (f"l{l}.wsrc", (de, dh)),
                (f"l{l}.wtrg", (de, dh)),
                (f"l{l}.wedge", (de, de)),
                (f"l{l}.fe.w1", (de, de)),
                (f"l{l}.fe.b1", (de,)),
                (f"l{l}.fe.w2", (de, de)),
                (f"l{l}.fe.b2", (de,)),
                (f"l{l}.fe.w3", (de, de)),
                (f"l{l}.fe.b3", (de,)),
                (f"l{l}.fn.w1", (dh, de)),
                (f"l{l}.fn.b1", (dh,)),
                (f"l{l}.fn.w2", (dh, dh)),
                (f"l{l}.fn.b2", (dh,)),
                (f"l{l}.fn.w3", (dh, dh)),
                (f"l{l}.fn.b3", (dh,)),
                (f"l{l}.lne.g", (de,)),
                (f"l{l}.lne.b", (de,)),
                (f"l{l}.lnx.g", (dh,)),
                (f"l{l}.lnx.b", (dh,)),
            ]
        shapes += [
            ("head_x.w", (self.node_out, dh)),
            ("head_x.b", (self.node_out,)),
            ("head_e.w", (self.edge_out, de)),
            ("head_e.b", (self.edge_out,)),
        ]
        return shapes

    def init_params(self, rng: RngStream) -> Params:
        names, arrays = [], {}
        for idx, (name, shape) in enumerate(self._shapes()):
            names.append(name)
            if len(shape) == 2:
                arrays[name] = normals(rng.child(idx), shape) / math.sqrt(shape[1])
            elif name.endswith(".g"):
                arrays[name] = np.ones(shape)
            elif ".fe.b" in name or ".fn.b" in name:
                # small random MLP biases keep relu preactivations away from
                # exact zero (all-zero message rows would otherwise sit on the kink)
                arrays[name] = 0.01 * normals(rng.child(idx), shape)
            else:
                arrays[name] = np.zeros(shape)
        return Params(names, arrays)

    # ---- forward -----------------------------------------------------

    def forward(self, params: Params, x_feat: np.ndarray, e_feat: np.ndarray):
        """Returns (node_logits (n, node_out), edge_logits (m, edge_out), cache)."""
        p = params.arrays
        n = x_feat.shape[0]
        cache: dict = {"n": n, "x_feat": x_feat, "e_feat": e_feat}
        x = x_feat @ p["win_x"].T + p["bin_x"]
        e = e_feat @ p["win_e"].T + p["bin_e"]
        offdiag = ~np.eye(n, dtype=bool)
        cache["offdiag"] = offdiag
        layers = []
        for l in range(self.config.layers):
            lc: dict = {"x_in": x, "e_in": e}
            pre_h = (
                (x @ p[f"l{l}.wsrc"].T)[:, None, :]
                + (x @ p[f"l{l}.wtrg"].T)[None, :, :]
                + e @ p[f"l{l}.wedge"].T
            )
            h = np.maximum(pre_h, 0.0)
            lc["pre_h"] = pre_h
            lc["h"] = h
            # f_edge MLP
            a1 = h @ p[f"l{l}.fe.w1"].T + p[f"l{l}.fe.b1"]
            r1 = np.maximum(a1, 0.0)
            a2 = r1 @ p[f"l{l}.fe.w2"].T + p[f"l{l}.fe.b2"]
            r2 = np.maximum(a2, 0.0)
            fe = r2 @ p[f"l{l}.fe.w3"].T + p[f"l{l}.fe.b3"]
            lc.update(fe_a1=a1, fe_r1=r1, fe_a2=a2, fe_r2=r2)
            e, lne = _ln_forward(fe, p[f"l{l}.lne.g"], p[f"l{l}.lne.b"])
            lc["lne"] = lne
            # f_node MLP and message sum over neighbors
            b1 = h @ p[f"l{l}.fn.w1"].T + p[f"l{l}.fn.b1"]
            s1 = np.maximum(b1, 0.0)
            b2 = s1 @ p[f"l{l}.fn.w2"].T + p[f"l{l}.fn.b2"]
            s2 = np.maximum(b2, 0.0)
            fn = s2 @ p[f"l{l}.fn.w3"].T + p[f"l{l}.fn.b3"]
            lc.update(fn_b1=b1, fn_s1=s1, fn_b2=b2, fn_s2=s2)
            msg = (fn * offdiag[:, :, None]).sum(axis=1)
            pre_x = lc["x_in"] + msg
            x, lnx = _ln_forward(pre_x, p[f"l{l}.lnx.g"], p[f"l{l}.lnx.b"])
            lc["lnx"] = lnx
            layers.append(lc)
        cache["layers"] = layers
        cache["x_out"] = x
        cache["e_out"] = e
        node_logits = x @ p["head_x.w"].T + p["head_x.b"]
        e_raw = e @ p["head_e.w"].T + p["head_e.b"]
        iu, ju = upper_indices(n)
        edge_logits = 0.5 * (e_raw[iu, ju] + e_raw[ju, iu])
        cache["iu"], cache["ju"] = iu, ju
        if not (np.all(np.isfinite(node_logits)) and np.all(np.isfinite(edge_logits))):
            raise DivergenceError("non-finite logits in forward pass")
        return node_logits, edge_logits, cache

    # ---- backward ----------------------------------------------------

    def backward(
        self,
        params: Params,
        cache: dict,
        d_node_logits: np.ndarray,
        d_edge_logits: np.ndarray,
        grads: Params,
    ) -> None:
        """Accumulate parameter gradients for the given output adjoints."""
        p = params.arrays
        g = grads.arrays
        n = cache["n"]
        offdiag = cache["offdiag"]
        iu, ju = cache["iu"], cache["ju"]

        x = cache["x_out"]
        e = cache["e_out"]
        g["head_x.w"] += d_node_logits.T @ x
        g["head_x.b"] += d_node_logits.sum(axis=0)
        dx = d_node_logits @ p["head_x.w"]
        d_e_raw = np.zeros((n, n, self.edge_out))
        d_e_raw[iu, ju] += 0.5 * d_edge_logits
        d_e_raw[ju, iu] += 0.5 * d_edge_logits
        g["head_e.w"] += d_e_raw.reshape(-1, self.edge_out).T @ e.reshape(-1, e.shape[-1])
        g["head_e.b"] += d_e_raw.sum(axis=(0, 1))
        de = d_e_raw @ p["head_e.w"]

        for l in reversed(range(self.config.layers)):
            lc = cache["layers"][l]
            # node layer norm
            d_pre_x, dg, db = _ln_backward(dx, lc["lnx"], p[f"l{l}.lnx.g"])
            g[f"l{l}.lnx.g"] += dg
            g[f"l{l}.lnx.b"] += db
            dx_in = d_pre_x.copy()
            d_fn = np.where(offdiag[:, :, None], d_pre_x[:, None, :], 0.0)
            # f_node MLP backward
            d_s2 = d_fn @ p[f"l{l}.fn.w3"]
            g[f"l{l}.fn.w3"] += _mat_grad(d_fn, lc["fn_s2"])
            g[f"l{l}.fn.b3"] += d_fn.sum(axis=(0, 1))
            d_b2 = d_s2 * (lc["fn_b2"] > 0)
            d_s1 = d_b2 @ p[f"l{l}.fn.w2"]
            g[f"l{l}.fn.w2"] += _mat_grad(d_b2, lc["fn_s1"])
            g[f"l{l}.fn.b2"] += d_b2.sum(axis=(0, 1))
            d_b1 = d_s1 * (lc["fn_b1"] > 0)
            dh = d_b1 @ p[f"l{l}.fn.w1"]
            g[f"l{l}.fn.w1"] += _mat_grad(d_b1, lc["h"])
            g[f"l{l}.fn.b1"] += d_b1.sum(axis=(0, 1))
            # edge layer norm
            d_fe, dg, db = _ln_backward(de, lc["lne"], p[f"l{l}.lne.g"])
            g[f"l{l}.lne.g"] += dg
            g[f"l{l}.lne.b"] += db
            # f_edge MLP backward
            d_r2 = d_fe @ p[f"l{l}.fe.w3"]
            g[f"l{l}.fe.w3"] += _mat_grad(d_fe, lc["fe_r2"])
            g[f"l{l}.fe.b3"] += d_fe.sum(axis=(0, 1))
            d_a2 = d_r2 * (lc["fe_a2"] > 0)
            d_r1 = d_a2 @ p[f"l{l}.fe.w2"]
            g[f"l{l}.fe.w2"] += _mat_grad(d_a2, lc["fe_r1"])
            g[f"l{l}.fe.b2"] += d_a2.sum(axis=(0, 1))
            d_a1 = d_r1 * (lc["fe_a1"] > 0)
            dh += d_a1 @ p[f"l{l}.fe.w1"]
            g[f"l{l}.fe.w1"] += _mat_grad(d_a1, lc["h"])
            g[f"l{l}.fe.b1"] += d_a1.sum(axis=(0, 1))
            # through the pair activation
            d_pre_h = dh * (lc["pre_h"] > 0)
            x_in = lc["x_in"]
            e_in = lc["e_in"]
            d_src = d_pre_h.sum(axis=1)  # adjoint of (wsrc x_i)
            d_trg = d_pre_h.sum(axis=0)  # adjoint of (wtrg x_j)
            g[f"l{l}.wsrc"] += d_src.T @ x_in
            g[f"l{l}.wtrg"] += d_trg.T @ x_in
            g[f"l{l}.wedge"] += _mat_grad(d_pre_h, e_in)
            dx_in += d_src @ p[f"l{l}.wsrc"] + d_trg @ p[f"l{l}.wtrg"]
            de = d_pre_h @ p[f"l{l}.wedge"]
            dx = dx_in
        # input projections
        g["win_x"] += dx.T @ cache["x_feat"]
        g["bin_x"] += dx.sum(axis=0)
        g["win_e"] += _mat_grad(de, cache["e_feat"])
        g["bin_e"] += de.sum(axis=(0, 1))


def _mat_grad(d_out: np.ndarray, inp: np.ndarray) -> np.ndarray:
    """Weight gradient for y = inp @ W.T summed over leading axes."""
    do = d_out.reshape(-1, d_out.shape[-1])
    xi = inp.reshape(-1, inp.shape[-1])
    return do.T @ xi


def _ln_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv)


def _ln_backward(dy: np.ndarray, ln_cache, gain: np.ndarray):
    xhat, inv = ln_cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dg, db
