"""Acceptance gate: eight criteria, one printed pass/fail line each.

Criteria 3-6 share one calibrated synthetic benchmark: N=1000 heterophilic
(h=0.2) SBM-style graphs over 5 seeds, poisoned by the gradient attacker
(add-only, surrogate power 2). All tolerances are pinned here.
"""

import time

import numpy as np
import pytest

from nspgnn.attack import AttackConfig, gradient_attack, theorem1_verification
from nspgnn.dual_knn import build_dual_knn
from nspgnn.experiment import run_experiment, strip_wall_clock
from nspgnn.model import backward, forward, init_params, nsp_sanitize
from nspgnn.similarity import separation_report
from nspgnn.synthetic import SyntheticSpec, generate_synthetic
from nspgnn.training import TrainConfig, nll_grad_wrt_s, nll_loss, train

from conftest import make_dataset, record_acceptance

SEEDS = (0, 1, 2, 3, 4)

ACC_SPEC = dict(
    n_nodes=1000, n_classes=3, mean_degree=10.0, homophily=0.2,
    feature_dim=16, class_separation=1.5, feature_noise=1.0,
)
ATTACK_TAU = 2
TRAIN_KW = dict(lr=0.01, epochs=500, hidden=(64,), k1=20, k2=10)

THEOREM1_SPEC = dict(
    n_nodes=100, n_classes=2, mean_degree=20.0, homophily=0.2,
    feature_dim=8, class_separation=2.0, feature_noise=0.5,
)


def attacked_dataset(seed, budget):
    ds = generate_synthetic(SyntheticSpec(seed=seed, **ACC_SPEC))
    if budget == 0.0:
        return ds, ds.graph
    cfg = AttackConfig(budget_fraction=budget, mode="add_only",
                       surrogate_tau=ATTACK_TAU, seed=seed)
    return ds, gradient_attack(ds, cfg).graph


def run_variant(ds, graph, variant, seed, tau_list=(1, 2)):
    work = ds.with_graph(graph)
    model_variant = variant
    if variant == "nsp_sanitize":
        clean = nsp_sanitize(graph, work.features, keep_fraction=0.8, tau_list=tau_list)
        work = work.with_graph(clean)
        model_variant = "gcn"
    cfg = TrainConfig(variant=model_variant, seed=seed, tau_list=tau_list, **TRAIN_KW)
    dual = None
    if model_variant in ("nspgnn", "nspgnn_wo"):
        dual = build_dual_knn(work.graph, work.features, cfg.k1, cfg.k2, tau_list=tau_list)
    return train(work, dual, cfg).test_accuracy


@pytest.fixture(scope="session")
def benchmark():
    """Mean test accuracies on the shared acceptance benchmark.

    Keys: (variant, budget) -> list of per-seed accuracies. The delta=0.25
    graphs also serve criteria 5 and 6.
    """
    t0 = time.perf_counter()
    acc = {}
    for seed in SEEDS:
        for budget in (0.0, 0.10, 0.25):
            ds, graph = attacked_dataset(seed, budget)
            variants = ["gcn", "nspgnn"]
            if budget == 0.25:
                variants += ["nspgnn_wo", "nsp_sanitize", "nspgnn_tau23"]
            for variant in variants:
                if variant == "nspgnn_tau23":
                    a = run_variant(ds, graph, "nspgnn", seed, tau_list=(2, 3))
                else:
                    a = run_variant(ds, graph, variant, seed)
                acc.setdefault((variant, budget), []).append(a)
    acc["wall_clock"] = time.perf_counter() - t0
    return acc


def fd_flat_gradient(params, ds, dual, step=1e-5):
    flat = params.to_flat()
    grad = np.empty_like(flat)
    work = params.copy()
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += step
        work.from_flat(bumped)
        s, _ = forward(work, ds, dual=dual)
        up = nll_loss(s, ds.labels, ds.split.train)
        bumped[i] -= 2.0 * step
        work.from_flat(bumped)
        s, _ = forward(work, ds, dual=dual)
        down = nll_loss(s, ds.labels, ds.split.train)
        grad[i] = (up - down) / (2.0 * step)
    return grad


def test_criterion_1_gradient_oracle():
    """Analytic vs central finite-difference gradients, all variants."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for variant in ("nspgnn", "nspgnn_wo", "gcn", "sgc"):
        for _ in range(20):
            n = int(rng.integers(6, 30))
            p, c = int(rng.integers(2, 6)), int(rng.integers(2, 4))
            pairs = rng.integers(0, n, size=(3 * n, 2))
            edges = [(int(u), int(v)) for u, v in pairs if u != v]
            edges += [(i, (i + 1) % n) for i in range(n)]
            x = rng.standard_normal((n, p))
            y = rng.integers(0, c, size=n)
            y[:c] = np.arange(c)
            ds = make_dataset(edges, x, y, n_classes=c)
            dims = (p, c) if variant == "sgc" else (p, 4, c)
            params = init_params(variant, dims, seed=int(rng.integers(1 << 30)))
            dual = None
            if variant in ("nspgnn", "nspgnn_wo"):
                k = min(3, n - 1)
                dual = build_dual_knn(ds.graph, x, k, k)
            s, tape = forward(params, ds, dual=dual)
            analytic = backward(tape, nll_grad_wrt_s(s, y, ds.split.train)).to_flat()
            numeric = fd_flat_gradient(params, ds, dual)
            denom = np.maximum(np.abs(numeric), 1e-8)
            worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 60.0
    record_acceptance(
        f"ACCEPTANCE 1 gradient oracle: {'PASS' if ok else 'FAIL'} "
        f"(max rel err {worst:.2e} < 1e-5, {elapsed:.0f}s < 60s)"
    )
    assert worst < 1e-5
    assert elapsed < 60.0


def test_criterion_2_theorem1_sign():
    """Kernel vs oracle attack-loss deltas anticorrelate on 5 seeded graphs."""
    t0 = time.perf_counter()
    rhos = []
    for seed in SEEDS:
        ds = generate_synthetic(SyntheticSpec(seed=seed, **THEOREM1_SPEC))
        stats = theorem1_verification(ds, tau=2, budget_fraction=0.02, seed=seed)
        assert not stats.degenerate
        rhos.append(stats.spearman)
    elapsed = time.perf_counter() - t0
    n_pass = sum(r < -0.2 for r in rhos)
    ok = n_pass >= 4 and elapsed < 600.0
    record_acceptance(
        f"ACCEPTANCE 2 Theorem-1 sign: {'PASS' if ok else 'FAIL'} "
        f"(rho<-0.2 in {n_pass}/5 runs, rhos={[round(r, 3) for r in rhos]}, "
        f"{elapsed:.0f}s < 600s)"
    )
    assert n_pass >= 4
    assert elapsed < 600.0


def test_criterion_3_separation_trend():
    """KL(malicious||benign) peaks at tau 1-2 and decays by tau 10."""
    t0 = time.perf_counter()
    ds, poisoned = attacked_dataset(seed=0, budget=0.15)
    rows = separation_report(ds.graph, poisoned, ds.features, [0, 1, 2, 10])
    kl = {r.tau: r.kl for r in rows}
    elapsed = time.perf_counter() - t0
    ok = (
        kl[1] > kl[0]
        and kl[2] > kl[0]
        and kl[10] < max(kl[1], kl[2])
        and elapsed < 300.0
    )
    record_acceptance(
        f"ACCEPTANCE 3 separation trend: {'PASS' if ok else 'FAIL'} "
        f"(KL tau0={kl[0]:.3f}, tau1={kl[1]:.3f}, tau2={kl[2]:.3f}, "
        f"tau10={kl[10]:.3f}, {elapsed:.0f}s < 300s)"
    )
    assert kl[1] > kl[0] and kl[2] > kl[0]
    assert kl[10] < max(kl[1], kl[2])
    assert elapsed < 300.0


def test_criterion_4_robustness_trend(benchmark):
    """NSPGNN beats GCN by >= 5 points under attack, within 1 point clean."""
    means = {k: float(np.mean(v)) for k, v in benchmark.items() if k != "wall_clock"}
    gap10 = means[("nspgnn", 0.10)] - means[("gcn", 0.10)]
    gap25 = means[("nspgnn", 0.25)] - means[("gcn", 0.25)]
    clean_gap = means[("nspgnn", 0.0)] - means[("gcn", 0.0)]
    elapsed = benchmark["wall_clock"]
    ok = gap10 >= 0.05 and gap25 >= 0.05 and clean_gap >= -0.01 and elapsed < 900.0
    record_acceptance(
        f"ACCEPTANCE 4 robustness trend: {'PASS' if ok else 'FAIL'} "
        f"(gap@10%={100 * gap10:.1f}pts, gap@25%={100 * gap25:.1f}pts >= 5pts, "
        f"clean gap={100 * clean_gap:.1f}pts >= -1pt, benchmark {elapsed:.0f}s < 900s)"
    )
    assert gap10 >= 0.05
    assert gap25 >= 0.05
    assert clean_gap >= -0.01
    assert elapsed < 900.0


def test_criterion_5_ablation_ordering(benchmark):
    """NSPGNN >= NSP-Sanitize and >= NSPGNN-w.o. - 2 points at delta=25%."""
    nsp = float(np.mean(benchmark[("nspgnn", 0.25)]))
    sanitize = float(np.mean(benchmark[("nsp_sanitize", 0.25)]))
    wo = float(np.mean(benchmark[("nspgnn_wo", 0.25)]))
    ok = nsp >= sanitize and nsp >= wo - 0.02
    record_acceptance(
        f"ACCEPTANCE 5 ablation ordering: {'PASS' if ok else 'FAIL'} "
        f"(nspgnn={nsp:.3f} >= sanitize={sanitize:.3f}, "
        f">= wo={wo:.3f} - 0.02)"
    )
    assert nsp >= sanitize
    assert nsp >= wo - 0.02


def test_criterion_6_tau_selection(benchmark):
    """tau_list {1,2} beats {2,3} on the delta=25% attacked benchmark."""
    tau12 = float(np.mean(benchmark[("nspgnn", 0.25)]))
    tau23 = float(np.mean(benchmark[("nspgnn_tau23", 0.25)]))
    ok = tau12 > tau23
    record_acceptance(
        f"ACCEPTANCE 6 tau selection: {'PASS' if ok else 'FAIL'} "
        f"(tau{{1,2}}={tau12:.3f} > tau{{2,3}}={tau23:.3f})"
    )
    assert tau12 > tau23


def test_criterion_7_determinism():
    """Identical experiment config twice -> identical metric fields."""
    cfg = {
        "dataset": {"kind": "synthetic", "spec": {
            "n_nodes": 80, "n_classes": 2, "mean_degree": 6.0, "homophily": 0.2,
            "feature_dim": 8, "class_separation": 2.0,
        }},
        "attack": {"kind": "gradient", "budget_fractions": [0.1], "mode": "add_only"},
        "variants": ["gcn", "nspgnn", "sgc"],
        "train": {"epochs": 40, "hidden": [8], "k1": 3, "k2": 3},
        "seeds": [0, 1],
    }
    a = strip_wall_clock(run_experiment(cfg))
    b = strip_wall_clock(run_experiment(cfg))
    ok = a == b
    record_acceptance(
        f"ACCEPTANCE 7 determinism: {'PASS' if ok else 'FAIL'} "
        f"(repeated run results.json metric fields identical: {ok})"
    )
    assert a == b


def test_criterion_8_invariant_suites():
    """All randomized invariant suites (>=100 cases each) pass."""
    import test_properties

    t0 = time.perf_counter()
    suites = [
        name for name in dir(test_properties)
        if name.startswith("test_") and callable(getattr(test_properties, name))
    ]
    for name in suites:
        getattr(test_properties, name)()
    elapsed = time.perf_counter() - t0
    ok = elapsed < 300.0
    record_acceptance(
        f"ACCEPTANCE 8 invariant suites: {'PASS' if ok else 'FAIL'} "
        f"({len(suites)} suites x >=100 cases, {elapsed:.0f}s < 300s)"
    )
    assert elapsed < 300.0
