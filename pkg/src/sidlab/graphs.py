"""Graph instances, label schemas, and corruption masks.

A graph carries n node labels and a symmetric n x n matrix of edge
labels in which index 0 always means "no edge" and the diagonal is fixed
to no-edge. The element slots of an instance are its n node slots plus
the m = n(n-1)/2 upper-triangular edge slots; everything downstream
(noising, losses, critics) iterates those slots and mirrors edge writes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

NO_EDGE = 0

GRAPHS_FORMAT = "sidlab-graphs"
GRAPHS_VERSION = 1


@dataclass(frozen=True)
class GraphSchema:
    """Label vocabulary sizes and size bounds for one graph family."""

    d_x: int
    d_e: int
    has_mask: bool
    n_min: int
    n_max: int

    def __post_init__(self):
        if self.d_x < 1:
            raise ValueError("need at least one node label")
        if self.d_e < 2:
            raise ValueError("edge vocabulary must include no-edge plus one label")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("invalid size bounds")

    # MASK, when present, is the last index of each vocabulary.
    @property
    def node_mask(self) -> int:
        if not self.has_mask:
            raise ValueError("schema has no mask label")
        return self.d_x

    @property
    def edge_mask(self) -> int:
        if not self.has_mask:
            raise ValueError("schema has no mask label")
        return self.d_e

    @property
    def node_vocab(self) -> int:
        return self.d_x + (1 if self.has_mask else 0)

    @property
    def edge_vocab(self) -> int:
        return self.d_e + (1 if self.has_mask else 0)

    def with_mask(self, has_mask: bool = True) -> "GraphSchema":
        return GraphSchema(self.d_x, self.d_e, has_mask, self.n_min, self.n_max)


def upper_indices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major upper-triangle index pair arrays for an n-node graph."""
    return np.triu_indices(n, k=1)


def element_count(g: "GraphInstance") -> tuple[int, int]:
    """(n, m) with m the number of unordered edge slots, n(n-1)/2."""
    n = g.n
    return n, n * (n - 1) // 2


class GraphInstance:
    """One labeled graph; node label vector plus symmetric edge matrix."""

    __slots__ = ("n", "node_labels", "edge_labels")

    def __init__(self, node_labels, edge_labels, validate: bool = True):
        x = np.asarray(node_labels, dtype=np.int64)
        e = np.asarray(edge_labels, dtype=np.int64)
        if validate:
            if x.ndim != 1 or x.size < 1:
                raise ValueError("node labels must be a non-empty vector")
            n = x.size
            if e.shape != (n, n):
                raise ValueError("edge matrix shape mismatch")
            if np.any(e != e.T):
                raise ValueError("edge labels must be symmetric")
            if np.any(np.diag(e) != NO_EDGE):
                raise ValueError("diagonal must be no-edge")
        self.n = x.size
        self.node_labels = x
        self.edge_labels = e

    @classmethod
    def from_upper(cls, node_labels, upper: np.ndarray) -> "GraphInstance":
        x = np.asarray(node_labels, dtype=np.int64)
        n = x.size
        e = np.full((n, n), NO_EDGE, dtype=np.int64)
        iu, ju = upper_indices(n)
        e[iu, ju] = upper
        e[ju, iu] = upper
        return cls(x, e, validate=False)

    def upper_edges(self) -> np.ndarray:
        iu, ju = upper_indices(self.n)
        return self.edge_labels[iu, ju]

    def copy(self) -> "GraphInstance":
        return GraphInstance(self.node_labels.copy(), self.edge_labels.copy(), validate=False)

    def permuted(self, perm: np.ndarray) -> "GraphInstance":
        """Relabel nodes so new node i is old node perm[i]."""
        perm = np.asarray(perm)
        x = self.node_labels[perm]
        e = self.edge_labels[np.ix_(perm, perm)]
        return GraphInstance(x, e, validate=False)

    def key(self) -> tuple:
        """Hashable exact identity (label-order sensitive)."""
        return (self.n, self.node_labels.tobytes(), self.upper_edges().tobytes())

    def __eq__(self, other) -> bool:
        return isinstance(other, GraphInstance) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"GraphInstance(n={self.n}, x={self.node_labels.tolist()}, e_upper={self.upper_edges().tolist()})"


class CorruptionMask:
    """Per-element keep indicators: True where an element was untouched.

    Edge flags mirror across the diagonal; the diagonal itself is never a
    slot and is pinned True.
    """

    __slots__ = ("node_flags", "edge_flags")

    def __init__(self, node_flags, edge_flags):
        nf = np.asarray(node_flags, dtype=bool)
        ef = np.asarray(edge_flags, dtype=bool)
        n = nf.size
        if ef.shape != (n, n):
            raise ValueError("edge flag shape mismatch")
        if np.any(ef != ef.T):
            raise ValueError("edge flags must be symmetric")
        ef = ef.copy()
        np.fill_diagonal(ef, True)
        self.node_flags = nf
        self.edge_flags = ef

    @classmethod
    def from_upper(cls, node_flags, upper: np.ndarray) -> "CorruptionMask":
        nf = np.asarray(node_flags, dtype=bool)
        n = nf.size
        ef = np.ones((n, n), dtype=bool)
        iu, ju = upper_indices(n)
        ef[iu, ju] = upper
        ef[ju, iu] = upper
        return cls(nf, ef)

    @classmethod
    def all_kept(cls, n: int) -> "CorruptionMask":
        return cls(np.ones(n, dtype=bool), np.ones((n, n), dtype=bool))

    @classmethod
    def none_kept(cls, n: int) -> "CorruptionMask":
        return cls(np.zeros(n, dtype=bool), np.zeros((n, n), dtype=bool))

    @property
    def n(self) -> int:
        return self.node_flags.size

    def upper_flags(self) -> np.ndarray:
        iu, ju = upper_indices(self.n)
        return self.edge_flags[iu, ju]


def save_graphs(path, graphs: Iterable[GraphInstance]) -> None:
    """Write graphs as versioned JSON lines (header line first)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"format": GRAPHS_FORMAT, "version": GRAPHS_VERSION}) + "\n")
        for g in graphs:
            row = {"n": int(g.n), "x": g.node_labels.tolist(), "e_upper": g.upper_edges().tolist()}
            fh.write(json.dumps(row) + "\n")


def load_graphs(path) -> list[GraphInstance]:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != GRAPHS_FORMAT:
            raise ValueError(f"not a {GRAPHS_FORMAT} file: {path}")
        if header.get("version") != GRAPHS_VERSION:
            raise ValueError(f"unsupported version {header.get('version')}")
        out = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.append(GraphInstance.from_upper(row["x"], np.asarray(row["e_upper"], dtype=np.int64)))
    return out


def iter_slots(n: int) -> Iterator[tuple]:
    """Element slots in canonical order: nodes, then row-major upper edges."""
    for i in range(n):
        yield ("node", i)
    for i in range(n):
        for j in range(i + 1, n):
            yield ("edge", i, j)
