"""Positive/negative kNN graph construction and normalized propagation matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidK
from .graph import Graph, build_graph, normalized_adjacency
from .similarity import SimilarityMatrix, similarity_matrix

DEFAULT_TAU_LIST = (1, 2)


@dataclass(frozen=True)
class DualKnnGraphs:
    """Normalized propagation matrices of the positive and negative kNN graphs.

    pos/neg map each tau to a symmetric CSR matrix (union-symmetrized kNN
    adjacency + self-loops, then D^{-1/2} A D^{-1/2}).
    """

    pos: dict  # tau -> csr_matrix
    neg: dict  # tau -> csr_matrix
    k_pos: int
    k_neg: int
    tau_list: tuple

    @property
    def n_nodes(self) -> int:
        first = next(iter(self.pos.values()))
        return first.shape[0]


def knn_select(sim: SimilarityMatrix, k: int, order: str) -> list:
    """Per-node top-k (descending) or bottom-k (ascending) neighbor lists.

    Ties break toward the lower node index; the node itself is excluded.
    """
    s = sim.values
    n = s.shape[0]
    if not (1 <= k <= n - 1):
        raise InvalidK(f"k={k} outside [1, {n - 1}]")
    if order not in ("descending", "ascending"):
        raise InvalidK(f"unknown order {order!r}")
    idx = np.arange(n)
    out = []
    for u in range(n):
        key = -s[u] if order == "descending" else s[u].copy()
        # lexsort: primary key last; secondary (index) resolves ties low-first
        perm = np.lexsort((idx, key))
        perm = perm[perm != u]
        out.append(perm[:k].tolist())
    return out


def _knn_graph(sim: SimilarityMatrix, k: int, order: str) -> Graph:
    neighbors = knn_select(sim, k, order)
    edges = []
    for u, vs in enumerate(neighbors):
        for v in vs:
            edges.append((u, v))
    return build_graph(edges, sim.values.shape[0])


def build_dual_knn(g: Graph, x: np.ndarray, k1: int, k2: int, tau_list=DEFAULT_TAU_LIST) -> DualKnnGraphs:
    """Construct the four normalized kNN propagation matrices.

    Directed kNN selections are symmetrized by union before self-loop
    addition and symmetric normalization; output is a pure function of the
    inputs (deterministic tie handling).
    """
    pos = {}
    neg = {}
    for tau in tau_list:
        sim = similarity_matrix(g, x, tau)
        pos[tau] = normalized_adjacency(_knn_graph(sim, k1, "descending"))
        neg[tau] = normalized_adjacency(_knn_graph(sim, k2, "ascending"))
    return DualKnnGraphs(pos=pos, neg=neg, k_pos=k1, k_neg=k2, tau_list=tuple(tau_list))


def export_knn_edges(g: Graph, x: np.ndarray, k1: int, k2: int, tau_list=DEFAULT_TAU_LIST) -> dict:
    """Raw (pre-normalization) kNN edge sets, keyed by ('pos'|'neg', tau)."""
    out = {}
    for tau in tau_list:
        sim = similarity_matrix(g, x, tau)
        out[("pos", tau)] = sorted(_knn_graph(sim, k1, "descending").edges)
        out[("neg", tau)] = sorted(_knn_graph(sim, k2, "ascending").edges)
    return out
