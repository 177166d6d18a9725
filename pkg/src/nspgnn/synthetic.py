"""SBM-style synthetic datasets with controllable homophily and class-mean features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, ShapeMismatch
from .graph import DataSplit, Dataset, build_graph


@dataclass(frozen=True)
class SyntheticSpec:
    n_nodes: int = 1000
    n_classes: int = 2
    mean_degree: float = 10.0
    homophily: float = 0.2
    feature_dim: int = 16
    class_separation: float = 1.0  # distance scale of class means
    feature_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mean_degree < 1 or self.mean_degree >= self.n_nodes:
            raise InvalidSpec("mean_degree must be in [1, n_nodes)")
        if not (0.0 <= self.homophily <= 1.0):
            raise InvalidSpec("homophily must be in [0, 1]")
        if self.class_separation < 0 or self.feature_noise < 0:
            raise InvalidSpec("class_separation and feature_noise must be >= 0")
        if self.n_classes < 2:
            raise InvalidSpec("need at least 2 classes")
        if self.feature_dim < self.n_classes:
            raise InvalidSpec("feature_dim must be >= n_classes")


def _balanced_labels(n: int, c: int, rng) -> np.ndarray:
    labels = np.arange(n) % c  # balanced within +/- 1 per class
    rng.shuffle(labels)
    return labels


def _class_means(c: int, p: int, scale: float, rng) -> np.ndarray:
    # orthonormal directions so every class pair is equally separated
    q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    return scale * q[:c]


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Sample an SBM-flavored dataset.

    Each of n*d/2 edges joins a same-class pair with probability h, otherwise
    a uniformly chosen cross-class pair. Features are class means plus
    isotropic Gaussian noise. Default 10/10/80 stratified split.
    """
    rng = np.random.default_rng(spec.seed)
    n, c = spec.n_nodes, spec.n_classes
    labels = _balanced_labels(n, c, rng)
    by_class = [np.where(labels == k)[0] for k in range(c)]

    target_edges = int(round(spec.n_nodes * spec.mean_degree / 2.0))
    edges = set()
    max_tries = 50 * target_edges + 1000
    tries = 0
    while len(edges) < target_edges and tries < max_tries:
        tries += 1
        if rng.random() < spec.homophily:
            k = int(rng.integers(c))
            pool = by_class[k]
            if pool.size < 2:
                continue
            u, v = rng.choice(pool, size=2, replace=False)
        else:
            k1, k2 = rng.choice(c, size=2, replace=False)
            u = rng.choice(by_class[k1])
            v = rng.choice(by_class[k2])
        u, v = int(u), int(v)
        if u == v:
            continue
        edges.add((u, v) if u < v else (v, u))
    if len(edges) < target_edges:
        raise InvalidSpec("could not place the requested number of edges")

    graph = build_graph(edges, n)
    means = _class_means(c, spec.feature_dim, spec.class_separation, rng)
    x = means[labels] + spec.feature_noise * rng.standard_normal((n, spec.feature_dim))
    split = stratified_split(labels, c, seed=spec.seed)
    return Dataset(graph=graph, features=x, labels=labels, n_classes=c, split=split)


def stratified_split(labels: np.ndarray, n_classes: int, train_frac: float = 0.1, val_frac: float = 0.1, seed: int = 0) -> DataSplit:
    """Seeded stratified split; every class gets at least one train node."""
    if train_frac <= 0 or train_frac + val_frac >= 1:
        raise ShapeMismatch("invalid split fractions")
    rng = np.random.default_rng(seed)
    n = labels.shape[0]
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for k in range(n_classes):
        idx = np.where(labels == k)[0]
        if idx.size == 0:
            raise ShapeMismatch(f"class {k} has no nodes; cannot stratify")
        idx = rng.permutation(idx)
        n_tr = max(1, int(round(train_frac * idx.size)))
        n_val = int(round(val_frac * idx.size))
        train[idx[:n_tr]] = True
        val[idx[n_tr : n_tr + n_val]] = True
        test[idx[n_tr + n_val :]] = True
    return DataSplit(train=train, val=val, test=test)
