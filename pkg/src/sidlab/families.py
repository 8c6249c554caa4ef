"""Toy graph families with analytic validity rules.

Two families cover the desk-scale experiments:

* ``TRIANGLE_FREE_4``: connected triangle-free graphs on exactly four
  unlabeled nodes (one node type, edge present/absent). Small enough to
  enumerate outright, which powers the exact posterior oracle.
* ``TOY_MOLECULE``: node types carry integer valences and edge labels
  carry bond orders (none/single/double); a graph is valid when it is
  connected and every node's incident bond orders sum exactly to its
  valence. Enumerable for fixed small n, rejection-sampleable above.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .graphs import NO_EDGE, GraphInstance, GraphSchema, upper_indices
from .rng import RngStream

TRIANGLE_FREE_4 = "TRIANGLE_FREE_4"
TOY_MOLECULE = "TOY_MOLECULE"

MAX_ENUMERABLE_STATES = 10**6

BOND_ORDERS = (0, 1, 2)  # no-edge, single, double


class StateSpaceTooLargeError(Exception):
    pass


class EmptyFamilyError(Exception):
    pass


class MaskLabelError(Exception):
    pass


class AcceptanceRateError(Exception):
    pass


@dataclass(frozen=True)
class ToyFamily:
    kind: str
    schema: GraphSchema
    valences: tuple | None = None

    def __post_init__(self):
        if self.kind == TOY_MOLECULE:
            if not self.valences:
                raise ValueError("toy molecule needs a valence table")
            if any((not isinstance(v, int)) or v < 1 for v in self.valences):
                raise ValueError("valences must be positive integers")
            if len(self.valences) != self.schema.d_x:
                raise ValueError("one valence per node label")
        elif self.kind != TRIANGLE_FREE_4:
            raise ValueError(f"unknown family kind: {self.kind!r}")


def triangle_free_4() -> ToyFamily:
    schema = GraphSchema(d_x=1, d_e=2, has_mask=False, n_min=4, n_max=4)
    return ToyFamily(kind=TRIANGLE_FREE_4, schema=schema)


def toy_molecule(valences: tuple = (1, 2, 3, 4), n_min: int = 3, n_max: int = 8) -> ToyFamily:
    schema = GraphSchema(d_x=len(valences), d_e=3, has_mask=False, n_min=n_min, n_max=n_max)
    return ToyFamily(kind=TOY_MOLECULE, schema=schema, valences=tuple(valences))


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 1:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = adj[0].copy()
    frontier[0] = False
    while frontier.any():
        seen |= frontier
        frontier = (adj[frontier].any(axis=0)) & ~seen
    return bool(seen.all())


def is_valid(g: GraphInstance, family: ToyFamily) -> bool:
    """Family validity rule; raises on MASK labels, which have no clean meaning."""
    schema = family.schema
    if np.any(g.node_labels >= schema.d_x) or np.any(g.edge_labels >= schema.d_e):
        raise MaskLabelError("instance contains labels outside the clean vocabulary")
    adj = g.edge_labels != NO_EDGE
    if family.kind == TRIANGLE_FREE_4:
        if not _connected(adj):
            return False
        a = adj.astype(np.int64)
        return int(np.trace(a @ a @ a)) == 0
    # toy molecule: connected and exact valence at every node
    if not _connected(adj):
        return False
    bonds = np.asarray(BOND_ORDERS)[g.edge_labels]
    np.fill_diagonal(bonds, 0)
    sums = bonds.sum(axis=1)
    valences = np.asarray(family.valences)[g.node_labels]
    return bool(np.all(sums == valences))


def _state_space_size(family: ToyFamily) -> int:
    schema = family.schema
    total = 0
    for n in range(schema.n_min, schema.n_max + 1):
        m = n * (n - 1) // 2
        total += schema.d_x**n * schema.d_e**m
    return total


def enumerate_family(family: ToyFamily) -> list[tuple[GraphInstance, float]]:
    """All valid instances with uniform probability.

    Enumeration walks edge configurations first: connectivity and bond
    sums depend only on edges, and for molecules the matching node
    labelings then factor per node.
    """
    if _state_space_size(family) > MAX_ENUMERABLE_STATES:
        raise StateSpaceTooLargeError(
            f"family state space exceeds {MAX_ENUMERABLE_STATES} instances"
        )
    schema = family.schema
    instances: list[GraphInstance] = []
    for n in range(schema.n_min, schema.n_max + 1):
        m = n * (n - 1) // 2
        iu, ju = upper_indices(n)
        for upper in itertools.product(range(schema.d_e), repeat=m):
            upper = np.asarray(upper, dtype=np.int64)
            adj = np.zeros((n, n), dtype=bool)
            adj[iu, ju] = upper != NO_EDGE
            adj |= adj.T
            if not _connected(adj):
                continue
            if family.kind == TRIANGLE_FREE_4:
                a = adj.astype(np.int64)
                if int(np.trace(a @ a @ a)) != 0:
                    continue
                instances.append(GraphInstance.from_upper(np.zeros(n, dtype=np.int64), upper))
                continue
            bonds = np.zeros((n, n), dtype=np.int64)
            bonds[iu, ju] = np.asarray(BOND_ORDERS)[upper]
            bonds += bonds.T
            sums = bonds.sum(axis=1)
            # per node, the labels whose valence equals the bond sum
            choices = [
                [lab for lab, v in enumerate(family.valences) if v == s] for s in sums
            ]
            if any(len(c) == 0 for c in choices):
                continue
            for labels in itertools.product(*choices):
                instances.append(
                    GraphInstance.from_upper(np.asarray(labels, dtype=np.int64), upper)
                )
    if not instances:
        raise EmptyFamilyError(f"{family.kind} admits no valid instance")
    p = 1.0 / len(instances)
    return [(g, p) for g in instances]


def _batch_connected(adj: np.ndarray) -> np.ndarray:
    """Connectivity of a (B, n, n) boolean adjacency stack."""
    b, n, _ = adj.shape
    reached = np.zeros((b, n), dtype=bool)
    reached[:, 0] = True
    for _ in range(n - 1):
        reached |= (adj & reached[:, None, :]).any(axis=2)
    return reached.all(axis=1)


def _batch_valid(family: ToyFamily, x: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Vectorized validity for a (B, n) / (B, m) label batch."""
    b, n = x.shape
    iu, ju = upper_indices(n)
    adj = np.zeros((b, n, n), dtype=bool)
    adj[:, iu, ju] = e != NO_EDGE
    adj |= adj.transpose(0, 2, 1)
    ok = _batch_connected(adj)
    if family.kind == TRIANGLE_FREE_4:
        a = adj.astype(np.int64)
        return ok & (np.einsum("bij,bjk,bki->b", a, a, a) == 0)
    orders = np.asarray(BOND_ORDERS)[e]
    incidence = np.zeros((n, iu.size), dtype=np.int64)
    incidence[iu, np.arange(iu.size)] = 1
    incidence[ju, np.arange(iu.size)] = 1
    sums = orders @ incidence.T
    return ok & np.all(sums == np.asarray(family.valences)[x], axis=1)


def generate_dataset(family: ToyFamily, count: int, rng: RngStream) -> list[GraphInstance]:
    """Rejection-sample uniform valid instances.

    Sizes are drawn uniformly from the schema's bounds and labels
    uniformly from the clean vocabulary, so within each size the
    accepted instances are uniform over the valid set. Attempts are
    processed in fixed-size chunks (vectorized validity), which keeps the
    output a pure function of the stream.
    """
    if count < 1:
        raise ValueError("count must be positive")
    schema = family.schema
    out: list[GraphInstance] = []
    attempts = 0
    chunk_idx = 0
    chunk = 4096
    while len(out) < count:
        if attempts > 2_000_000 and len(out) / attempts < 1e-6:
            raise AcceptanceRateError(
                f"estimated acceptance rate below 1e-6 after {attempts} attempts"
            )
        crng = rng.child(chunk_idx)
        chunk_idx += 1
        attempts += chunk
        span = schema.n_max - schema.n_min + 1
        ns = schema.n_min + np.minimum((crng.uniforms(chunk) * span).astype(np.int64), span - 1)
        for n in range(schema.n_min, schema.n_max + 1):
            b = int((ns == n).sum())
            if b == 0:
                continue
            m = n * (n - 1) // 2
            u = crng.child(n).uniforms(b * (n + m)).reshape(b, n + m)
            x = np.minimum((u[:, :n] * schema.d_x).astype(np.int64), schema.d_x - 1)
            e = np.minimum((u[:, n:] * schema.d_e).astype(np.int64), schema.d_e - 1)
            for i in np.flatnonzero(_batch_valid(family, x, e)):
                out.append(GraphInstance.from_upper(x[i], e[i]))
    return out[:count]


def empirical_size_dist(dataset: list[GraphInstance]) -> tuple[np.ndarray, np.ndarray]:
    """Observed sizes and their frequencies, for drawing n at generation time."""
    sizes = np.asarray(sorted({g.n for g in dataset}), dtype=np.int64)
    counts = np.asarray([sum(1 for g in dataset if g.n == s) for s in sizes], dtype=np.float64)
    return sizes, counts / counts.sum()


def empirical_label_marginals(
    dataset: list[GraphInstance], schema: GraphSchema
) -> tuple[np.ndarray, np.ndarray]:
    """Pooled node and upper-edge label frequencies over a dataset."""
    node_counts = np.zeros(schema.d_x)
    edge_counts = np.zeros(schema.d_e)
    for g in dataset:
        node_counts += np.bincount(g.node_labels, minlength=schema.d_x)
        edge_counts += np.bincount(g.upper_edges(), minlength=schema.d_e)
    if node_counts.sum() == 0 or edge_counts.sum() == 0:
        raise ValueError("empty dataset")
    return node_counts / node_counts.sum(), edge_counts / edge_counts.sum()
