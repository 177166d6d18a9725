"""Neighbor-feature similarity, link-score extraction, and histogram KL divergence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDistribution, ShapeMismatch
from .graph import Graph, check_dense_cap, powered_features

KL_BINS = 50
KL_EPS = 1e-6


@dataclass(frozen=True)
class SimilarityMatrix:
    """Symmetric cosine-similarity matrix of tau-hop aggregated features.

    Rows whose aggregated features are all zero (isolated nodes at tau >= 1)
    get similarity 0 to everything, including themselves.
    """

    values: np.ndarray
    tau: int


@dataclass
class LinkScoreSets:
    """Similarity scores split by link provenance between a clean/poisoned pair."""

    benign: np.ndarray
    malicious: np.ndarray
    removed: np.ndarray
    benign_edges: list
    malicious_edges: list
    removed_edges: list
    tau: int


def similarity_matrix(g: Graph, x: np.ndarray, tau: int, cap: int | None = None) -> SimilarityMatrix:
    """Pairwise cosine similarity of rows of A^tau X (dense N x N)."""
    if cap is not None:
        check_dense_cap(g.n_nodes, cap)
    else:
        check_dense_cap(g.n_nodes)
    feats = powered_features(g, x, tau)
    norms = np.linalg.norm(feats, axis=1)
    nonzero = norms > 0.0
    safe = np.where(nonzero, norms, 1.0)
    unit = feats / safe[:, None]
    sim = unit @ unit.T
    np.clip(sim, -1.0, 1.0, out=sim)
    sim[~nonzero, :] = 0.0
    sim[:, ~nonzero] = 0.0
    idx = np.where(nonzero)[0]
    sim[idx, idx] = 1.0
    sim = 0.5 * (sim + sim.T)  # enforce exact symmetry
    return SimilarityMatrix(values=sim, tau=tau)


def link_scores(clean: Graph, poisoned: Graph, sim: SimilarityMatrix) -> LinkScoreSets:
    """Split the poisoned graph's links into benign/malicious, track removals."""
    if clean.n_nodes != poisoned.n_nodes:
        raise ShapeMismatch("clean and poisoned graphs must share n_nodes")
    benign_edges = sorted(poisoned.edges & clean.edges)
    malicious_edges = sorted(poisoned.edges - clean.edges)
    removed_edges = sorted(clean.edges - poisoned.edges)
    s = sim.values

    def scores(pairs):
        if not pairs:
            return np.empty(0, dtype=np.float64)
        arr = np.array(pairs, dtype=np.int64)
        return s[arr[:, 0], arr[:, 1]].astype(np.float64)

    return LinkScoreSets(
        benign=scores(benign_edges),
        malicious=scores(malicious_edges),
        removed=scores(removed_edges),
        benign_edges=benign_edges,
        malicious_edges=malicious_edges,
        removed_edges=removed_edges,
        tau=sim.tau,
    )


def _smoothed_histogram(samples: np.ndarray, n_bins: int, eps: float) -> np.ndarray:
    counts, _ = np.histogram(samples, bins=n_bins, range=(-1.0, 1.0))
    probs = counts / counts.sum()
    probs = probs + eps
    return probs / probs.sum()


def kl_divergence(p_samples, q_samples, n_bins: int = KL_BINS, eps: float = KL_EPS) -> float:
    """KL(p || q) between histogram densities on a fixed [-1, 1] binning.

    Both histograms get additive eps smoothing and are renormalized, so the
    result is finite and >= 0 for any non-empty sample sets.
    """
    p_samples = np.asarray(p_samples, dtype=np.float64)
    q_samples = np.asarray(q_samples, dtype=np.float64)
    if p_samples.size == 0 or q_samples.size == 0:
        raise EmptyDistribution("KL divergence needs non-empty sample sets")
    p = _smoothed_histogram(p_samples, n_bins, eps)
    q = _smoothed_histogram(q_samples, n_bins, eps)
    return float(np.sum(p * np.log(p / q)))


@dataclass
class SeparationRow:
    tau: int
    kl: float | None
    error: str | None = None
    scores: LinkScoreSets | None = None


def separation_report(clean: Graph, poisoned: Graph, x: np.ndarray, tau_list) -> list:
    """Per-tau KL(malicious || benign) plus the raw score sets for plotting."""
    if not tau_list:
        raise ShapeMismatch("tau_list must be non-empty")
    rows = []
    for tau in tau_list:
        sim = similarity_matrix(poisoned, x, tau)
        ls = link_scores(clean, poisoned, sim)
        if ls.malicious.size == 0 or ls.benign.size == 0:
            rows.append(SeparationRow(tau=tau, kl=None, error="empty score set", scores=ls))
            continue
        rows.append(SeparationRow(tau=tau, kl=kl_divergence(ls.malicious, ls.benign), scores=ls))
    return rows
