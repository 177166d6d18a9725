"""Experiment orchestration: config parsing, cell execution, results emission.

A run is a grid of cells (seed x variant x attack power). Cells are executed
in a worker pool but merged in config order, so results.json is deterministic
for a fixed config and thread count (wall-clock fields aside).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .attack import AttackConfig, brute_force_attack, gradient_attack
from .dual_knn import build_dual_knn
from .errors import DataError, NspgnnError
from .graph import Dataset, Graph, build_graph
from .io import load_dataset, dataset_stats, read_edge_list, write_density_csv
from .model import nsp_sanitize
from .similarity import separation_report
from .synthetic import SyntheticSpec, generate_synthetic
from .training import TrainConfig, train

KNOWN_VARIANTS = ("nspgnn", "nspgnn_wo", "gcn", "sgc", "nsp_sanitize")

DEFAULT_CONFIG = {
    "dataset": {"kind": "synthetic", "spec": {}},
    "attack": {"kind": "none"},
    "variants": ["gcn", "nspgnn"],
    "train": {},
    "sanitize": {"keep_fraction": 0.8},
    "seeds": [0],
    "tau_kl_list": [0, 1, 2, 10],
    "output_dir": None,
    "workers": 1,
}


def _merged_config(cfg: dict) -> dict:
    out = {**DEFAULT_CONFIG, **cfg}
    out["dataset"] = {**DEFAULT_CONFIG["dataset"], **cfg.get("dataset", {})}
    out["attack"] = {**DEFAULT_CONFIG["attack"], **cfg.get("attack", {})}
    out["sanitize"] = {**DEFAULT_CONFIG["sanitize"], **cfg.get("sanitize", {})}
    train_defaults = {f: getattr(TrainConfig, f) for f in ("lr", "epochs", "k1", "k2", "hidden", "tau_list", "sgc_tau")}
    train_defaults["hidden"] = list(train_defaults["hidden"])
    train_defaults["tau_list"] = list(train_defaults["tau_list"])
    out["train"] = {**train_defaults, **cfg.get("train", {})}
    if not out["seeds"]:
        raise DataError("seeds must be non-empty")
    for v in out["variants"]:
        if v not in KNOWN_VARIANTS:
            raise DataError(f"unknown variant {v!r}")
    return out


def _build_dataset(cfg: dict, seed: int) -> Dataset:
    spec = cfg["dataset"]
    if spec["kind"] == "synthetic":
        params = dict(spec.get("spec", {}))
        params["seed"] = seed
        return generate_synthetic(SyntheticSpec(**params))
    if spec["kind"] == "files":
        return load_dataset(
            spec["edges"], spec["features"], spec["labels"],
            split_path=spec.get("split"), seed=seed,
        )
    raise DataError(f"unknown dataset kind {spec['kind']!r}")


def _apply_attack(dataset: Dataset, attack: dict, power: float, seed: int) -> Graph:
    kind = attack["kind"]
    if kind == "none" or power == 0.0:
        return dataset.graph
    if kind == "external":
        edges = read_edge_list(attack["edges"])
        return build_graph(edges, dataset.graph.n_nodes)
    acfg = AttackConfig(
        budget_fraction=power,
        mode=attack.get("mode", "flip"),
        surrogate_tau=attack.get("surrogate_tau", 2),
        seed=seed,
    )
    if kind == "gradient":
        return gradient_attack(dataset, acfg).graph
    if kind == "brute_force":
        return brute_force_attack(dataset, acfg).graph
    raise DataError(f"unknown attack kind {kind!r}")


def _attack_powers(attack: dict) -> list:
    if attack["kind"] == "none":
        return [0.0]
    if attack["kind"] == "external":
        return [None]  # power is implicit in the supplied edge list
    return list(attack.get("budget_fractions", [0.05]))


def run_cell(dataset: Dataset, poisoned: Graph, variant: str, train_cfg: dict, sanitize_cfg: dict, seed: int) -> dict:
    """Train/evaluate one variant on one (possibly poisoned) graph."""
    t0 = time.perf_counter()
    ds = dataset.with_graph(poisoned)
    model_variant = variant
    if variant == "nsp_sanitize":
        clean_graph = nsp_sanitize(
            poisoned, ds.features,
            keep_fraction=sanitize_cfg.get("keep_fraction"),
            threshold=sanitize_cfg.get("threshold"),
            tau_list=tuple(train_cfg["tau_list"]),
        )
        ds = ds.with_graph(clean_graph)
        model_variant = "gcn"
    tcfg = TrainConfig(
        lr=train_cfg["lr"], epochs=train_cfg["epochs"], seed=seed,
        k1=train_cfg["k1"], k2=train_cfg["k2"], variant=model_variant,
        hidden=tuple(train_cfg["hidden"]), tau_list=tuple(train_cfg["tau_list"]),
        sgc_tau=train_cfg["sgc_tau"],
    )
    dual = None
    if model_variant in ("nspgnn", "nspgnn_wo"):
        dual = build_dual_knn(ds.graph, ds.features, tcfg.k1, tcfg.k2, tau_list=tcfg.tau_list)
    result = train(ds, dual, tcfg)
    return {
        "seed": seed,
        "variant": variant,
        "test_accuracy": result.test_accuracy,
        "best_val_accuracy": result.best_val_accuracy,
        "best_epoch": result.best_epoch,
        "final_train_loss": result.train_losses[-1],
        "train_loss_curve": result.train_losses,
        "val_accuracy_curve": result.val_accuracies,
        "wall_clock_sec": time.perf_counter() - t0,
    }


def _run_group(cfg: dict, seed: int, power) -> dict:
    """All variants for one (seed, attack power) pair; one attack per group."""
    dataset = _build_dataset(cfg, seed)
    # power is None only for external poisons, where it is implicit in the file
    poisoned = _apply_attack(dataset, cfg["attack"], power if power is not None else 1.0, seed)
    group = {"seed": seed, "attack_power": power, "cells": [], "kl": None}
    for variant in cfg["variants"]:
        try:
            cell = run_cell(dataset, poisoned, variant, cfg["train"], cfg["sanitize"], seed)
            cell["attack_power"] = power
            cell["error"] = None
        except NspgnnError as exc:
            cell = {
                "seed": seed, "variant": variant, "attack_power": power,
                "test_accuracy": None, "error": f"{type(exc).__name__}: {exc}",
            }
        group["cells"].append(cell)
    if poisoned.edges != dataset.graph.edges:
        rows = separation_report(dataset.graph, poisoned, dataset.features, cfg["tau_kl_list"])
        group["kl"] = [{"tau": r.tau, "kl": r.kl, "error": r.error} for r in rows]
        group["scores"] = {r.tau: r.scores for r in rows}
    return group


def _group_worker(args):
    cfg, seed, power = args
    return _run_group(cfg, seed, power)


def summarize(cells: list) -> list:
    """Mean/stderr of test accuracy per (variant, attack power)."""
    keys = []
    for c in cells:
        k = (c["variant"], c["attack_power"])
        if k not in keys:
            keys.append(k)
    out = []
    for variant, power in keys:
        accs = [c["test_accuracy"] for c in cells
                if c["variant"] == variant and c["attack_power"] == power and c["test_accuracy"] is not None]
        if accs:
            mean = float(np.mean(accs))
            stderr = float(np.std(accs, ddof=1) / np.sqrt(len(accs))) if len(accs) > 1 else 0.0
        else:
            mean, stderr = None, None
        out.append({
            "variant": variant, "attack_power": power,
            "mean_test_accuracy": mean, "stderr_test_accuracy": stderr, "n_seeds": len(accs),
        })
    return out


def run_experiment(cfg: dict, output_dir=None) -> dict:
    """Execute the full grid and return (and optionally write) the result bundle."""
    cfg = _merged_config(cfg)
    if output_dir is None:
        output_dir = cfg.get("output_dir")
    powers = _attack_powers(cfg["attack"])
    jobs = [(cfg, seed, power) for power in powers for seed in cfg["seeds"]]

    workers = int(cfg.get("workers", 1) or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            groups = list(pool.map(_group_worker, jobs))  # map preserves job order
    else:
        groups = [_run_group(*job) for job in jobs]

    cells = [c for g in groups for c in g["cells"]]
    kl_tables = [
        {"seed": g["seed"], "attack_power": g["attack_power"], "rows": g["kl"]}
        for g in groups if g["kl"] is not None
    ]
    first_seed_stats = dataset_stats(_build_dataset(cfg, cfg["seeds"][0]))
    results = {
        "config": _jsonable(cfg),
        "version": f"nspgnn-{__version__}",
        "dataset_stats": first_seed_stats,
        "cells": _jsonable(cells),
        "summary": summarize(cells),
        "kl_tables": kl_tables,
    }

    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for g in groups:
            if g.get("scores"):
                sub = out / f"seed{g['seed']}_power{g['attack_power']}"
                sub.mkdir(exist_ok=True)
                for tau, scores in g["scores"].items():
                    if scores is not None and (scores.benign.size or scores.malicious.size or scores.removed.size):
                        write_density_csv(scores, sub / f"scores_tau{tau}.csv")
        (out / "results.json").write_text(json.dumps(results, indent=2))
    return results


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def strip_wall_clock(results: dict) -> dict:
    """Results with wall-clock fields removed, for determinism comparisons."""
    out = json.loads(json.dumps(results))
    for cell in out.get("cells", []):
        cell.pop("wall_clock_sec", None)
    return out
