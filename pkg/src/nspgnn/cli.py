"""Experiment CLI.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .attack import AttackConfig, brute_force_attack, gradient_attack
from .dual_knn import build_dual_knn, export_knn_edges
from .errors import CapacityExceeded, NonFiniteGradient, NspgnnError
from .experiment import run_experiment
from .io import (
    dataset_stats,
    load_dataset,
    read_edge_list,
    write_density_csv,
    write_edge_list,
    write_features,
    write_labels,
    write_split,
)
from .graph import build_graph
from .model import forward, load_params, nsp_sanitize, save_params
from .similarity import separation_report
from .synthetic import SyntheticSpec, generate_synthetic
from .training import TrainConfig, accuracy, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_dataset_args(p):
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--seed", type=int, default=0)


def _load(args):
    return load_dataset(args.edges, args.features, args.labels, split_path=args.split, seed=args.seed)


def cmd_generate(args):
    spec = SyntheticSpec(
        n_nodes=args.n_nodes, n_classes=args.n_classes, mean_degree=args.mean_degree,
        homophily=args.homophily, feature_dim=args.feature_dim,
        class_separation=args.class_separation, feature_noise=args.feature_noise,
        seed=args.seed,
    )
    ds = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(ds.graph.edges, out / "edges.tsv")
    write_features(ds.features, out / "features.csv")
    write_labels(ds.labels, out / "labels.csv")
    write_split(ds.split, out / "split.json")
    print(json.dumps(dataset_stats(ds)))


def cmd_load_check(args):
    ds = _load(args)
    print(json.dumps(dataset_stats(ds)))


def cmd_attack(args):
    ds = _load(args)
    cfg = AttackConfig(
        budget_fraction=args.budget, mode=args.mode,
        surrogate_tau=args.surrogate_tau, seed=args.seed,
    )
    attacker = brute_force_attack if args.kind == "brute_force" else gradient_attack
    report = attacker(ds, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_edge_list(report.graph.edges, out / "poisoned_edges.tsv")
    payload = {
        "kind": args.kind,
        "budget_fraction": args.budget,
        "mode": args.mode,
        "surrogate_tau": args.surrogate_tau,
        "delta_kind": report.delta_kind,
        "base_attack_loss": report.base_attack_loss,
        "flips": [{"u": u, "v": v, "op": op, "delta": d} for (u, v, op, d) in report.flips],
        "kernel_scores": report.kernel_scores,
        "pearson": report.pearson,
        "spearman": report.spearman,
        "degenerate": report.degenerate,
    }
    (out / "attack_report.json").write_text(json.dumps(payload, indent=2))
    print(json.dumps({"n_flips": len(report.flips), "spearman": report.spearman}))


def _density_export(args):
    x = np.loadtxt(args.features, delimiter=",", dtype=np.float64, ndmin=2)
    clean_edges = read_edge_list(args.clean_edges)
    poisoned_edges = read_edge_list(args.poisoned_edges)
    n = x.shape[0]
    clean = build_graph(clean_edges, n)
    poisoned = build_graph(poisoned_edges, n)
    rows = separation_report(clean, poisoned, x, args.tau_list)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = []
    for r in rows:
        if r.scores is not None:
            write_density_csv(r.scores, out / f"scores_tau{r.tau}.csv")
        table.append({"tau": r.tau, "kl": r.kl, "error": r.error})
    return table


def cmd_analyze(args):
    table = _density_export(args)
    print(json.dumps({"kl_table": table}))


def cmd_export_density(args):
    _density_export(args)


def cmd_train(args):
    ds = _load(args)
    cfg = TrainConfig(
        lr=args.lr, epochs=args.epochs, seed=args.seed, k1=args.k1, k2=args.k2,
        variant=args.variant, hidden=tuple(args.hidden), tau_list=tuple(args.tau_list),
    )
    dual = None
    if cfg.variant in ("nspgnn", "nspgnn_wo"):
        dual = build_dual_knn(ds.graph, ds.features, cfg.k1, cfg.k2, tau_list=cfg.tau_list)
    result = train(ds, dual, cfg)
    if args.checkpoint:
        save_params(result.best_params, args.checkpoint)
    print(json.dumps({
        "test_accuracy": result.test_accuracy,
        "best_val_accuracy": result.best_val_accuracy,
        "best_epoch": result.best_epoch,
        "final_train_loss": result.train_losses[-1],
    }))


def cmd_evaluate(args):
    ds = _load(args)
    params = load_params(args.checkpoint)
    dual = None
    if params.variant in ("nspgnn", "nspgnn_wo"):
        dual = build_dual_knn(ds.graph, ds.features, args.k1, args.k2, tau_list=tuple(args.tau_list))
    s, _ = forward(params, ds, dual=dual)
    print(json.dumps({
        "test_accuracy": accuracy(s, ds.labels, ds.split.test),
        "val_accuracy": accuracy(s, ds.labels, ds.split.val) if ds.split.val.any() else None,
    }))


def cmd_sanitize(args):
    x = np.loadtxt(args.features, delimiter=",", dtype=np.float64, ndmin=2)
    g = build_graph(read_edge_list(args.edges), x.shape[0])
    out_graph = nsp_sanitize(
        g, x, keep_fraction=args.keep_fraction, threshold=args.threshold,
        tau_list=tuple(args.tau_list),
    )
    write_edge_list(out_graph.edges, args.out)
    print(json.dumps({"n_edges_before": g.n_edges, "n_edges_after": out_graph.n_edges}))


def cmd_experiment(args):
    cfg = json.loads(Path(args.config).read_text())
    results = run_experiment(cfg, output_dir=args.out)
    print(json.dumps({"summary": results["summary"]}))


def cmd_export_knn(args):
    x = np.loadtxt(args.features, delimiter=",", dtype=np.float64, ndmin=2)
    g = build_graph(read_edge_list(args.edges), x.shape[0])
    sets = export_knn_edges(g, x, args.k1, args.k2, tau_list=tuple(args.tau_list))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (kind, tau), edges in sets.items():
        write_edge_list(edges, out / f"{kind}_tau{tau}.tsv")


def build_parser():
    parser = _Parser(prog="nspgnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset to a directory")
    p.add_argument("--n-nodes", type=int, default=1000)
    p.add_argument("--n-classes", type=int, default=2)
    p.add_argument("--mean-degree", type=float, default=10.0)
    p.add_argument("--homophily", type=float, default=0.2)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--class-separation", type=float, default=1.0)
    p.add_argument("--feature-noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("load-check", help="validate dataset files and print stats")
    _add_dataset_args(p)
    p.set_defaults(func=cmd_load_check)

    p = sub.add_parser("attack", help="poison a graph and emit the report")
    _add_dataset_args(p)
    p.add_argument("--kind", choices=["gradient", "brute_force"], default="gradient")
    p.add_argument("--budget", type=float, default=0.05)
    p.add_argument("--mode", choices=["add_only", "flip"], default="flip")
    p.add_argument("--surrogate-tau", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attack)

    for name, fn in (("analyze", cmd_analyze), ("export-density", cmd_export_density)):
        p = sub.add_parser(name, help="similarity/KL separation analysis" if name == "analyze" else "write per-tau score CSVs")
        p.add_argument("--clean-edges", required=True)
        p.add_argument("--poisoned-edges", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--tau-list", type=int, nargs="+", default=[0, 1, 2, 10])
        p.add_argument("--out", required=True)
        p.set_defaults(func=fn)

    p = sub.add_parser("train", help="train one model on a dataset")
    _add_dataset_args(p)
    p.add_argument("--variant", choices=["nspgnn", "nspgnn_wo", "gcn", "sgc"], default="nspgnn")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--k1", type=int, default=10)
    p.add_argument("--k2", type=int, default=10)
    p.add_argument("--hidden", type=int, nargs="+", default=[64])
    p.add_argument("--tau-list", type=int, nargs="+", default=[1, 2])
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset")
    _add_dataset_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--k1", type=int, default=10)
    p.add_argument("--k2", type=int, default=10)
    p.add_argument("--tau-list", type=int, nargs="+", default=[1, 2])
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sanitize", help="prune low-similarity edges")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--keep-fraction", type=float, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--tau-list", type=int, nargs="+", default=[1, 2])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sanitize)

    p = sub.add_parser("experiment", help="run a full experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("export-knn", help="write dual-kNN edge sets as TSV")
    p.add_argument("--edges", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--k1", type=int, default=10)
    p.add_argument("--k2", type=int, default=10)
    p.add_argument("--tau-list", type=int, nargs="+", default=[1, 2])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_knn)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (NonFiniteGradient, CapacityExceeded) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (NspgnnError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
