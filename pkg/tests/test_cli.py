import json

import numpy as np
import pytest

from nspgnn.cli import main
from nspgnn.io import read_edge_list


def run_cli(capsys, *argv):
    try:
        code = main(list(argv))
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def dataset_dir(tmp_path, capsys):
    out = tmp_path / "data"
    code = main([
        "generate", "--n-nodes", "60", "--n-classes", "2", "--mean-degree", "6",
        "--homophily", "0.2", "--feature-dim", "6", "--class-separation", "2.0",
        "--seed", "0", "--out", str(out),
    ])
    capsys.readouterr()
    assert code == 0
    return out


def dataset_args(d):
    return ["--edges", str(d / "edges.tsv"), "--features", str(d / "features.csv"),
            "--labels", str(d / "labels.csv"), "--split", str(d / "split.json")]


def test_usage_error_exit_1(capsys):
    code, _, err = run_cli(capsys, "no-such-command")
    assert code == 1


def test_missing_file_exit_2(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, "load-check", "--edges", str(tmp_path / "nope.tsv"),
        "--features", str(tmp_path / "nope.csv"), "--labels", str(tmp_path / "nope.csv"),
    )
    assert code == 2
    assert "data error" in err


def test_generate_and_load_check(dataset_dir, capsys):
    code, out, _ = run_cli(capsys, "load-check", *dataset_args(dataset_dir))
    assert code == 0
    stats = json.loads(out)
    assert stats["n_nodes"] == 60
    assert stats["n_edges"] == 180
    assert 0.0 <= stats["homophily_ratio"] <= 1.0


def test_train_evaluate_checkpoint_roundtrip(dataset_dir, tmp_path, capsys):
    ckpt = tmp_path / "model.ckpt"
    code, out, _ = run_cli(
        capsys, "train", *dataset_args(dataset_dir),
        "--variant", "gcn", "--epochs", "40", "--hidden", "8",
        "--checkpoint", str(ckpt),
    )
    assert code == 0
    trained = json.loads(out)
    assert 0.0 <= trained["test_accuracy"] <= 1.0

    code, out, _ = run_cli(capsys, "evaluate", *dataset_args(dataset_dir),
                           "--checkpoint", str(ckpt))
    assert code == 0
    evaluated = json.loads(out)
    assert evaluated["test_accuracy"] == pytest.approx(trained["test_accuracy"])


def test_attack_analyze_pipeline(dataset_dir, tmp_path, capsys):
    atk = tmp_path / "atk"
    code, out, _ = run_cli(
        capsys, "attack", *dataset_args(dataset_dir),
        "--kind", "gradient", "--budget", "0.1", "--out", str(atk),
    )
    assert code == 0
    assert json.loads(out)["n_flips"] == 18
    report = json.loads((atk / "attack_report.json").read_text())
    assert len(report["flips"]) == 18

    dens = tmp_path / "dens"
    code, out, _ = run_cli(
        capsys, "analyze",
        "--clean-edges", str(dataset_dir / "edges.tsv"),
        "--poisoned-edges", str(atk / "poisoned_edges.tsv"),
        "--features", str(dataset_dir / "features.csv"),
        "--tau-list", "0", "1", "--out", str(dens),
    )
    assert code == 0
    table = json.loads(out)["kl_table"]
    assert [row["tau"] for row in table] == [0, 1]
    assert (dens / "scores_tau0.csv").exists()
    assert (dens / "scores_tau1.csv").exists()


def test_sanitize_subcommand(dataset_dir, tmp_path, capsys):
    out_edges = tmp_path / "clean.tsv"
    code, out, _ = run_cli(
        capsys, "sanitize",
        "--edges", str(dataset_dir / "edges.tsv"),
        "--features", str(dataset_dir / "features.csv"),
        "--keep-fraction", "0.8", "--out", str(out_edges),
    )
    assert code == 0
    info = json.loads(out)
    assert info["n_edges_after"] == round(0.8 * info["n_edges_before"])
    assert len(read_edge_list(out_edges)) == info["n_edges_after"]


def test_export_knn_subcommand(dataset_dir, tmp_path, capsys):
    out = tmp_path / "knn"
    code, _, _ = run_cli(
        capsys, "export-knn",
        "--edges", str(dataset_dir / "edges.tsv"),
        "--features", str(dataset_dir / "features.csv"),
        "--k1", "3", "--k2", "3", "--out", str(out),
    )
    assert code == 0
    for name in ("pos_tau1.tsv", "pos_tau2.tsv", "neg_tau1.tsv", "neg_tau2.tsv"):
        edges = read_edge_list(out / name)
        assert len(edges) >= 60 * 3 / 2  # union-symmetrized out-degree >= 3


def test_experiment_subcommand(tmp_path, capsys):
    cfg = {
        "dataset": {"kind": "synthetic", "spec": {
            "n_nodes": 50, "n_classes": 2, "mean_degree": 5.0, "homophily": 0.8,
            "feature_dim": 6, "class_separation": 2.0,
        }},
        "attack": {"kind": "none"},
        "variants": ["gcn", "sgc"],
        "train": {"epochs": 30, "hidden": [8]},
        "seeds": [0],
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    out = tmp_path / "run"
    code, stdout, _ = run_cli(capsys, "experiment", "--config", str(cfg_path), "--out", str(out))
    assert code == 0
    summary = json.loads(stdout)["summary"]
    assert {row["variant"] for row in summary} == {"gcn", "sgc"}
    results = json.loads((out / "results.json").read_text())
    for cell in results["cells"]:
        assert 0.0 < cell["test_accuracy"] <= 1.0


def test_experiment_bad_config_exit_2(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text("{not json")
    code, _, err = run_cli(capsys, "experiment", "--config", str(cfg_path))
    assert code == 2
