"""Sparse graph substrate: CSR adjacency, normalization, powered features, homophily.

All adjacency matrices are binary, symmetric and self-loop free; self-loops
are introduced only by `normalized_adjacency`. Floating point is float64
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    CapacityExceeded,
    EmptyGraph,
    EmptyMask,
    InvalidNode,
    ShapeMismatch,
)

# Dense N x N intermediates are refused above this node count.
DENSE_CAP = 20_000


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph with a symmetric binary CSR adjacency."""

    n_nodes: int
    edges: frozenset  # frozenset of (u, v) with u < v
    adj: sp.csr_matrix  # symmetric, binary, zero diagonal, sorted indices

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adj.sum(axis=1)).ravel()

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n_nodes == other.n_nodes and self.edges == other.edges

    def __hash__(self):
        return hash((self.n_nodes, self.edges))


@dataclass(frozen=True)
class DataSplit:
    """Disjoint boolean train/val/test masks over nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        n = self.train.shape[0]
        if self.val.shape[0] != n or self.test.shape[0] != n:
            raise ShapeMismatch("split masks must have equal length")
        for name, m in (("train", self.train), ("val", self.val), ("test", self.test)):
            if m.dtype != np.bool_:
                raise ShapeMismatch(f"{name} mask must be boolean")
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise ShapeMismatch("split masks must be pairwise disjoint")
        if not self.train.any():
            raise EmptyMask("train mask is empty")


@dataclass(frozen=True)
class Dataset:
    """Graph + dense features + labels + split."""

    graph: Graph
    features: np.ndarray  # (n, p) float64
    labels: np.ndarray  # (n,) int64 in [0, n_classes)
    n_classes: int
    split: DataSplit

    def __post_init__(self):
        n = self.graph.n_nodes
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != n:
            raise ShapeMismatch(f"features must be ({n}, p), got {x.shape}")
        if not np.isfinite(x).all():
            raise ShapeMismatch("features contain non-finite entries")
        y = np.asarray(self.labels)
        if y.shape != (n,):
            raise ShapeMismatch(f"labels must have shape ({n},), got {y.shape}")
        if self.n_classes < 2:
            raise ShapeMismatch("need at least 2 classes")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ShapeMismatch("label out of range")
        if self.split.train.shape[0] != n:
            raise ShapeMismatch("split size does not match graph")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(np.int64))

    def with_graph(self, graph: Graph) -> "Dataset":
        """Same features/labels/split on a different (e.g. poisoned) structure."""
        return Dataset(graph, self.features, self.labels, self.n_classes, self.split)


def build_graph(edge_list, n_nodes: int) -> Graph:
    """Build a Graph from an iterable of (u, v) pairs.

    Duplicates and reversed duplicates collapse to one undirected edge;
    self-loop entries (u == u) are silently dropped.
    """
    if n_nodes < 0:
        raise InvalidNode("n_nodes must be >= 0")
    edges = set()
    for u, v in edge_list:
        u, v = int(u), int(v)
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise InvalidNode(f"edge ({u}, {v}) out of range for n_nodes={n_nodes}")
        if u == v:
            continue
        edges.add((u, v) if u < v else (v, u))
    if edges:
        arr = np.array(sorted(edges), dtype=np.int64)
        rows = np.concatenate([arr[:, 0], arr[:, 1]])
        cols = np.concatenate([arr[:, 1], arr[:, 0]])
        data = np.ones(rows.shape[0], dtype=np.float64)
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes))
    else:
        adj = sp.csr_matrix((n_nodes, n_nodes), dtype=np.float64)
    adj.sort_indices()
    return Graph(n_nodes=n_nodes, edges=frozenset(edges), adj=adj)


def graph_from_adjacency(dense: np.ndarray) -> Graph:
    """Graph from a dense 0/1 symmetric matrix (diagonal ignored)."""
    n = dense.shape[0]
    iu, ju = np.nonzero(np.triu(dense, k=1))
    return build_graph(zip(iu.tolist(), ju.tolist()), n)


def normalized_adjacency(g: Graph) -> sp.csr_matrix:
    """Symmetrically normalized adjacency with self-loops.

    Degrees are taken from A + I so isolated nodes get degree 1.
    """
    a_tilde = (g.adj + sp.identity(g.n_nodes, format="csr", dtype=np.float64)).tocsr()
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    out = (d @ a_tilde @ d).tocsr()
    out.sort_indices()
    return out


def powered_features(g: Graph, x: np.ndarray, tau: int) -> np.ndarray:
    """Apply the raw binary adjacency tau times to the feature matrix.

    Never materializes A^tau; repeated sparse-dense products instead.
    """
    if tau < 0:
        raise ShapeMismatch("tau must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != g.n_nodes:
        raise ShapeMismatch(f"features must be ({g.n_nodes}, p), got {x.shape}")
    out = x.copy()
    for _ in range(tau):
        out = g.adj @ out
    return out


def homophily_ratio(g: Graph, labels: np.ndarray) -> float:
    """Fraction of edges whose endpoints share a label."""
    if g.n_edges == 0:
        raise EmptyGraph("homophily ratio undefined on an empty edge set")
    labels = np.asarray(labels)
    if labels.shape != (g.n_nodes,):
        raise ShapeMismatch("labels length must equal n_nodes")
    arr = np.array(sorted(g.edges), dtype=np.int64)
    same = labels[arr[:, 0]] == labels[arr[:, 1]]
    return float(np.mean(same))


def check_dense_cap(n: int, cap: int = DENSE_CAP) -> None:
    if n > cap:
        raise CapacityExceeded(f"dense N x N intermediate refused for N={n} > cap={cap}")
