"""Desk-scale structural poisoning and vulnerability verification.

Two attackers are provided: an exact greedy brute-force oracle (retrains the
SGC surrogate for every candidate flip, feasible for N <= 200) and a one-shot
gradient attacker that scores flips by the exact derivative of the attack
loss on the dense adjacency relaxation, holding the surrogate weights fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CapacityExceeded, ShapeMismatch
from .graph import Dataset, Graph, build_graph, powered_features
from .model import ModelParams, _glorot, forward, init_params
from .training import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, nll_loss

BRUTE_FORCE_NODE_CAP = 200


@dataclass
class AttackConfig:
    budget_fraction: float = 0.05
    mode: str = "flip"  # "add_only" | "flip"
    surrogate_tau: int = 2
    candidate_cap: int | None = None
    seed: int = 0
    inner_epochs: int = 200  # surrogate retraining budget per candidate
    inner_lr: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.budget_fraction <= 0.5):
            raise ShapeMismatch("budget_fraction must be in [0, 0.5]")
        if self.mode not in ("add_only", "flip"):
            raise ShapeMismatch(f"unknown attack mode {self.mode!r}")


@dataclass
class AttackReport:
    flips: list  # (u, v, "added"|"removed", delta)
    kernel_scores: list  # K[u, v] at selection time, one per flip
    pearson: float | None
    spearman: float | None
    degenerate: bool
    graph: Graph
    candidate_edges: list  # step-1 addition candidates
    candidate_deltas: np.ndarray
    candidate_kernel: np.ndarray
    delta_kind: str  # "oracle" | "first_order"
    base_attack_loss: float


def attack_kernel(g: Graph, x: np.ndarray, tau: int) -> np.ndarray:
    """Gram matrix of powered features: (A^tau X)(A^tau X)^T."""
    from .graph import check_dense_cap

    check_dense_cap(g.n_nodes)
    feats = powered_features(g, x, tau)
    return feats @ feats.T


def attack_loss(g: Graph, dataset: Dataset, surrogate_params: ModelParams) -> float:
    """Negative test-mask NLL of the trained surrogate evaluated on graph g."""
    ds = dataset.with_graph(g)
    s, _ = forward(surrogate_params, ds)
    return -nll_loss(s, ds.labels, ds.split.test)


def _dense_ahat(a_dense: np.ndarray) -> np.ndarray:
    a_tilde = a_dense + np.eye(a_dense.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def _design_dense(a_dense: np.ndarray, x: np.ndarray, tau: int) -> np.ndarray:
    ahat = _dense_ahat(a_dense)
    out = x.copy()
    for _ in range(tau):
        out = ahat @ out
    return out


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _sgc_init_w(p: int, c: int, seed: int) -> np.ndarray:
    return _glorot(np.random.default_rng(seed), p, c)


def _train_sgc_batch(f_tr: np.ndarray, y_tr: np.ndarray, c: int, epochs: int, lr: float, seed: int) -> np.ndarray:
    """Train one SGC weight matrix per batch entry on a fixed design matrix.

    f_tr: (B, n_tr, p) designs restricted to train nodes. All batch entries
    share the same seeded initialization, so results are deterministic.
    Returns W of shape (B, p, c).
    """
    b, n_tr, p = f_tr.shape
    y_onehot = np.zeros((n_tr, c))
    y_onehot[np.arange(n_tr), y_tr] = 1.0
    w = np.broadcast_to(_sgc_init_w(p, c, seed), (b, p, c)).copy()
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    f_tr_t = f_tr.transpose(0, 2, 1)
    for t in range(1, epochs + 1):
        s = _softmax(f_tr @ w)
        grad = f_tr_t @ ((s - y_onehot) / n_tr)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad**2
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return w


def _batch_attack_loss(f_te: np.ndarray, w: np.ndarray, y_te: np.ndarray) -> np.ndarray:
    """Negative test NLL per batch entry."""
    s = _softmax(f_te @ w)
    probs = s[:, np.arange(y_te.size), y_te]
    return np.mean(np.log(probs), axis=1)  # == -NLL


def train_surrogate(dataset: Dataset, cfg: AttackConfig, graph: Graph | None = None) -> ModelParams:
    """Fixed-budget SGC training (the oracle's inner problem)."""
    g = graph if graph is not None else dataset.graph
    x = dataset.features
    a_dense = g.adj.toarray()
    f = _design_dense(a_dense, x, cfg.surrogate_tau)
    tr = np.where(dataset.split.train)[0]
    w = _train_sgc_batch(
        f[None, tr, :], dataset.labels[tr], dataset.n_classes,
        cfg.inner_epochs, cfg.inner_lr, cfg.seed,
    )[0]
    params = init_params("sgc", (x.shape[1], dataset.n_classes), seed=cfg.seed, tau=cfg.surrogate_tau)
    params.layers[0]["W"] = w
    return params


def _candidate_pairs(a_dense: np.ndarray, mode: str, cap: int | None):
    n = a_dense.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    if mode == "add_only":
        keep = a_dense[iu, ju] == 0.0
        iu, ju = iu[keep], ju[keep]
    pairs = list(zip(iu.tolist(), ju.tolist()))
    if cap is not None:
        pairs = pairs[:cap]
    return pairs


def _evaluate_candidates(a_dense, x, dataset, cfg, pairs, chunk=2048):
    """Attack loss after retraining the surrogate for every candidate flip."""
    tr = np.where(dataset.split.train)[0]
    te = np.where(dataset.split.test)[0]
    y_tr = dataset.labels[tr]
    y_te = dataset.labels[te]
    c = dataset.n_classes
    losses = np.empty(len(pairs))
    for start in range(0, len(pairs), chunk):
        block = pairs[start : start + chunk]
        f_tr = np.empty((len(block), tr.size, x.shape[1]))
        f_te = np.empty((len(block), te.size, x.shape[1]))
        for i, (u, v) in enumerate(block):
            a_dense[u, v] = a_dense[v, u] = 1.0 - a_dense[u, v]
            f = _design_dense(a_dense, x, cfg.surrogate_tau)
            a_dense[u, v] = a_dense[v, u] = 1.0 - a_dense[u, v]
            f_tr[i] = f[tr]
            f_te[i] = f[te]
        w = _train_sgc_batch(f_tr, y_tr, c, cfg.inner_epochs, cfg.inner_lr, cfg.seed)
        losses[start : start + len(block)] = _batch_attack_loss(f_te, w, y_te)
    return losses


def _single_attack_loss(a_dense, x, dataset, cfg) -> float:
    """Attack loss of one graph through the same batched path as candidates."""
    tr = np.where(dataset.split.train)[0]
    te = np.where(dataset.split.test)[0]
    f = _design_dense(a_dense, x, cfg.surrogate_tau)
    w = _train_sgc_batch(f[None, tr, :], dataset.labels[tr], dataset.n_classes,
                         cfg.inner_epochs, cfg.inner_lr, cfg.seed)
    return float(_batch_attack_loss(f[None, te, :], w, dataset.labels[te])[0])


def _correlation(kernel_vals, deltas):
    """Pearson/Spearman of kernel scores vs attack-loss deltas; flags degeneracy."""
    kernel_vals = np.asarray(kernel_vals, dtype=np.float64)
    deltas = np.asarray(deltas, dtype=np.float64)
    if kernel_vals.size < 2 or np.ptp(kernel_vals) == 0.0 or np.ptp(deltas) == 0.0:
        return None, None, True
    pearson = float(stats.pearsonr(kernel_vals, deltas).statistic)
    spearman = float(stats.spearmanr(kernel_vals, deltas).statistic)
    return pearson, spearman, False


def brute_force_attack(dataset: Dataset, cfg: AttackConfig) -> AttackReport:
    """Greedy exact poisoning: every candidate flip is scored by retraining.

    At each of B steps the flip minimizing the attack loss is applied (ties
    break lexicographically). Step-1 deltas over addition candidates are kept
    for the Theorem-1 correlation analysis.
    """
    g = dataset.graph
    if g.n_nodes > BRUTE_FORCE_NODE_CAP:
        raise CapacityExceeded(f"brute force capped at N={BRUTE_FORCE_NODE_CAP}")
    x = dataset.features
    budget = int(np.floor(cfg.budget_fraction * g.n_edges))
    a_dense = g.adj.toarray()

    clean_loss = _single_attack_loss(a_dense, x, dataset, cfg)
    base_loss = clean_loss

    flips = []
    kernel_scores = []
    cand_edges: list = []
    cand_deltas = np.empty(0)
    cand_kernel = np.empty(0)
    current = g

    for step in range(budget):
        pairs = _candidate_pairs(a_dense, cfg.mode, cfg.candidate_cap)
        if not pairs:
            break
        losses = _evaluate_candidates(a_dense, x, dataset, cfg, pairs)
        kernel = attack_kernel(current, x, cfg.surrogate_tau)
        if step == 0:
            additions = [i for i, (u, v) in enumerate(pairs) if a_dense[u, v] == 0.0]
            cand_edges = [pairs[i] for i in additions]
            cand_deltas = losses[additions] - base_loss
            cand_kernel = kernel[tuple(np.array(cand_edges).T)] if cand_edges else np.empty(0)
        best = int(np.argmin(losses))  # first (lexicographically lowest) argmin
        u, v = pairs[best]
        op = "removed" if a_dense[u, v] == 1.0 else "added"
        flips.append((u, v, op, float(losses[best] - base_loss)))
        kernel_scores.append(float(kernel[u, v]))
        a_dense[u, v] = a_dense[v, u] = 1.0 - a_dense[u, v]
        base_loss = float(losses[best])
        current = _graph_from_dense(a_dense, g.n_nodes)

    pearson, spearman, degenerate = _correlation(cand_kernel, cand_deltas)
    return AttackReport(
        flips=flips,
        kernel_scores=kernel_scores,
        pearson=pearson,
        spearman=spearman,
        degenerate=degenerate,
        graph=current,
        candidate_edges=cand_edges,
        candidate_deltas=cand_deltas,
        candidate_kernel=cand_kernel,
        delta_kind="oracle",
        base_attack_loss=clean_loss,
    )


def _graph_from_dense(a_dense: np.ndarray, n: int) -> Graph:
    iu, ju = np.nonzero(np.triu(a_dense, k=1))
    return build_graph(zip(iu.tolist(), ju.tolist()), n)


def attack_loss_grad_wrt_adjacency(g: Graph, dataset: Dataset, w: np.ndarray, tau: int) -> np.ndarray:
    """Exact d(attack loss)/dA on the dense relaxation, weights held fixed.

    Differentiates through the symmetric normalization including the degree
    terms. Returns a dense N x N matrix of per-entry derivatives; the per-pair
    derivative of an undirected flip is grad[u, v] + grad[v, u] (plus nothing
    else, the degree terms are already folded in).
    """
    x = dataset.features
    n = g.n_nodes
    a_dense = g.adj.toarray()
    a_tilde = a_dense + np.eye(n)
    deg = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    ahat = a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]

    # forward pieces
    xw = x @ w
    powers = [np.eye(n)]
    for _ in range(tau):
        powers.append(ahat @ powers[-1])
    z = powers[tau] @ xw
    s = _softmax(z)
    te = dataset.split.test
    n_te = int(te.sum())
    y = np.zeros_like(s)
    idx = np.where(te)[0]
    y[idx, dataset.labels[idx]] = 1.0
    dz = np.zeros_like(s)
    dz[idx] = -(s[idx] - y[idx]) / n_te  # attack loss = -NLL

    # d(loss)/d(ahat) for z = ahat^tau (x w)
    g_xw = dz @ xw.T  # N x N: d loss / d(ahat^tau)
    dahat = np.zeros((n, n))
    for t in range(tau):
        dahat += powers[t] @ g_xw @ powers[tau - 1 - t]

    # chain through ahat_ij = a_tilde_ij / sqrt(d_i d_j)
    datilde = dahat * inv_sqrt[:, None] * inv_sqrt[None, :]
    prod = dahat * ahat
    ddeg = -(prod.sum(axis=1) + prod.sum(axis=0)) / (2.0 * deg)
    # dA_uv moves a_tilde_uv directly and bumps both degrees by one
    grad = datilde + 0.5 * (ddeg[:, None] + ddeg[None, :])
    np.fill_diagonal(grad, 0.0)
    return grad


def gradient_attack(dataset: Dataset, cfg: AttackConfig) -> AttackReport:
    """One-shot gradient attacker: flip the B most loss-decreasing pairs.

    The surrogate is trained once on the clean graph; flips are ranked by the
    first-order predicted change of the attack loss (score < 0 decreases it).
    """
    g = dataset.graph
    x = dataset.features
    budget = int(np.floor(cfg.budget_fraction * g.n_edges))

    surrogate = train_surrogate(dataset, cfg)
    w = surrogate.layers[0]["W"]
    base_loss = attack_loss(g, dataset, surrogate)
    grad = attack_loss_grad_wrt_adjacency(g, dataset, w, cfg.surrogate_tau)

    a_dense = g.adj.toarray()
    iu, ju = np.triu_indices(g.n_nodes, k=1)
    present = a_dense[iu, ju]
    pair_grad = grad[iu, ju] + grad[ju, iu]
    score = (1.0 - 2.0 * present) * pair_grad  # predicted delta of flipping
    if cfg.mode == "add_only":
        keep = present == 0.0
        iu, ju, score, present = iu[keep], ju[keep], score[keep], present[keep]

    order = np.lexsort((ju, iu, score))  # most negative first, lex ties
    chosen = order[:budget]

    kernel = attack_kernel(g, x, cfg.surrogate_tau)
    flips = []
    kernel_scores = []
    for i in chosen:
        u, v = int(iu[i]), int(ju[i])
        op = "removed" if present[i] == 1.0 else "added"
        flips.append((u, v, op, float(score[i])))
        kernel_scores.append(float(kernel[u, v]))
        a_dense[u, v] = a_dense[v, u] = 1.0 - a_dense[u, v]

    add_mask = present == 0.0
    cand_edges = list(zip(iu[add_mask].tolist(), ju[add_mask].tolist()))
    cand_deltas = score[add_mask]
    cand_kernel = kernel[iu[add_mask], ju[add_mask]]
    pearson, spearman, degenerate = _correlation(cand_kernel, cand_deltas)

    return AttackReport(
        flips=flips,
        kernel_scores=kernel_scores,
        pearson=pearson,
        spearman=spearman,
        degenerate=degenerate,
        graph=_graph_from_dense(a_dense, g.n_nodes),
        candidate_edges=cand_edges,
        candidate_deltas=cand_deltas,
        candidate_kernel=cand_kernel,
        delta_kind="first_order",
        base_attack_loss=base_loss,
    )


@dataclass
class Theorem1Stats:
    spearman: float | None
    pearson: float | None
    degenerate: bool
    chosen_mean_similarity: float | None
    candidate_mean_similarity: float | None
    n_candidates: int


def theorem1_verification(dataset: Dataset, tau: int = 2, budget_fraction: float = 0.05, seed: int = 0) -> Theorem1Stats:
    """Empirical sign check of the kernel/attack-loss anti-correlation.

    Runs the brute-force oracle (additions only), correlates K[u, v] with the
    oracle delta of adding (u, v), and compares the mean one-hop similarity of
    the chosen attack edges against the whole candidate pool.
    """
    from .similarity import similarity_matrix

    cfg = AttackConfig(budget_fraction=budget_fraction, mode="add_only", surrogate_tau=tau, seed=seed)
    report = brute_force_attack(dataset, cfg)

    chosen_mean = None
    cand_mean = None
    if report.flips:
        sim = similarity_matrix(dataset.graph, dataset.features, 1).values
        added = [(u, v) for (u, v, op, _) in report.flips if op == "added"]
        if added:
            arr = np.array(added, dtype=np.int64)
            chosen_mean = float(np.mean(sim[arr[:, 0], arr[:, 1]]))
        if report.candidate_edges:
            arr = np.array(report.candidate_edges, dtype=np.int64)
            cand_mean = float(np.mean(sim[arr[:, 0], arr[:, 1]]))
    return Theorem1Stats(
        spearman=report.spearman,
        pearson=report.pearson,
        degenerate=report.degenerate,
        chosen_mean_similarity=chosen_mean,
        candidate_mean_similarity=cand_mean,
        n_candidates=len(report.candidate_edges),
    )
