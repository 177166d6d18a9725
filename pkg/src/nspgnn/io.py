"""File formats: TSV edge lists, CSV features/labels, JSON splits, density CSVs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DataError, ShapeMismatch
from .graph import DataSplit, Dataset, Graph, build_graph, homophily_ratio
from .similarity import LinkScoreSets
from .synthetic import stratified_split


def read_edge_list(path) -> list:
    """TSV edge list: one `u<TAB>v` per line, `#` comments ignored."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected `u<TAB>v`, got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-integer node id") from exc
    return edges


def write_edge_list(edges, path) -> None:
    with open(path, "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")


def read_features(path) -> np.ndarray:
    """CSV of N rows x p real columns, no header; widened to float64."""
    try:
        x = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: malformed feature CSV: {exc}") from exc
    if not np.isfinite(x).all():
        raise DataError(f"{path}: non-finite feature entries")
    return x


def write_features(x: np.ndarray, path) -> None:
    np.savetxt(path, x, delimiter=",", fmt="%.17g")


def read_labels(path) -> np.ndarray:
    try:
        y = np.loadtxt(path, dtype=np.int64, ndmin=1)
    except ValueError as exc:
        raise DataError(f"{path}: malformed label CSV: {exc}") from exc
    return y


def write_labels(y: np.ndarray, path) -> None:
    np.savetxt(path, y, fmt="%d")


def read_split(path, n: int) -> DataSplit:
    """JSON {"train": [ids], "val": [ids], "test": [ids]}."""
    obj = json.loads(Path(path).read_text())
    masks = {}
    for key in ("train", "val", "test"):
        if key not in obj:
            raise DataError(f"{path}: missing split key {key!r}")
        mask = np.zeros(n, dtype=bool)
        ids = np.asarray(obj[key], dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise DataError(f"{path}: split id out of range in {key!r}")
        mask[ids] = True
        masks[key] = mask
    return DataSplit(train=masks["train"], val=masks["val"], test=masks["test"])


def write_split(split: DataSplit, path) -> None:
    obj = {
        "train": np.where(split.train)[0].tolist(),
        "val": np.where(split.val)[0].tolist(),
        "test": np.where(split.test)[0].tolist(),
    }
    Path(path).write_text(json.dumps(obj))


def load_dataset(edges_path, features_path, labels_path, split_path=None, seed: int = 0) -> Dataset:
    """Validated dataset from files; a default stratified split is generated
    from the seed when no split file is given."""
    x = read_features(features_path)
    n = x.shape[0]
    edges = read_edge_list(edges_path)
    graph = build_graph(edges, n)
    y = read_labels(labels_path)
    if y.shape[0] != n:
        raise ShapeMismatch(f"labels rows ({y.shape[0]}) != feature rows ({n})")
    if y.min() < 0:
        raise DataError("negative label")
    n_classes = int(y.max()) + 1
    if split_path is not None:
        split = read_split(split_path, n)
    else:
        split = stratified_split(y, n_classes, seed=seed)
    return Dataset(graph=graph, features=x, labels=y, n_classes=n_classes, split=split)


def dataset_stats(ds: Dataset) -> dict:
    stats = {
        "n_nodes": ds.graph.n_nodes,
        "n_edges": ds.graph.n_edges,
        "n_classes": ds.n_classes,
        "feature_dim": int(ds.features.shape[1]),
        "n_train": int(ds.split.train.sum()),
        "n_val": int(ds.split.val.sum()),
        "n_test": int(ds.split.test.sum()),
    }
    stats["homophily_ratio"] = homophily_ratio(ds.graph, ds.labels) if ds.graph.n_edges else None
    return stats


def write_density_csv(scores: LinkScoreSets, path) -> None:
    """`score,label` rows (benign/malicious/removed), 17 significant digits."""
    with open(path, "w") as f:
        f.write("score,label\n")
        for arr, label in ((scores.benign, "benign"), (scores.malicious, "malicious"), (scores.removed, "removed")):
            for s in arr:
                f.write(f"{s:.17g},{label}\n")


def read_density_csv(path):
    """Round-trip reader for the density CSV; returns {label: np.ndarray}."""
    out = {"benign": [], "malicious": [], "removed": []}
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "score,label":
        raise DataError(f"{path}: missing density CSV header")
    for line in lines[1:]:
        score, label = line.rsplit(",", 1)
        if label not in out:
            raise DataError(f"{path}: unknown label {label!r}")
        out[label].append(float(score))
    return {k: np.asarray(v) for k, v in out.items()}
