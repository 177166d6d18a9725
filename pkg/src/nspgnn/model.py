"""NSPGNN layer stack, GCN/SGC baselines, sanitize ablation, manual backprop.

Parameters live in plain float64 numpy arrays grouped per layer; a flat
vector view backs the optimizer and gradient checks. Forward passes record
a tape of intermediates so `backward` can produce exact reverse-mode
gradients for every parameter, including the gate MLPs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyGraph,
    MissingDualGraphs,
    ShapeMismatch,
    TapeMismatch,
)
from .dual_knn import DualKnnGraphs
from .graph import Dataset, Graph, build_graph, normalized_adjacency
from .similarity import similarity_matrix

VARIANTS = ("nspgnn", "nspgnn_wo", "gcn", "sgc")

# Deterministic parameter order inside each layer, per variant.
LAYER_KEYS = {
    "nspgnn": ("W_m", "b_m", "W_n", "b_n", "W_s", "W_o", "W_d"),
    "nspgnn_wo": ("W_m", "b_m", "W_s", "W_o"),
    "gcn": ("W",),
    "sgc": ("W",),
}


@dataclass
class ModelParams:
    """All learnable weights of one model, with a flat-vector view."""

    variant: str
    dims: tuple  # (p, h1, ..., C)
    layers: list  # list of {key: ndarray}
    n_branches: int = 2  # gated kNN graphs per mixture (len of tau_list)
    tau: int = 2  # propagation power, sgc only
    seed: int | None = None

    def n_layers(self) -> int:
        return len(self.layers)

    def to_flat(self) -> np.ndarray:
        chunks = []
        for layer in self.layers:
            for key in LAYER_KEYS[self.variant]:
                chunks.append(layer[key].ravel())
        return np.concatenate(chunks) if chunks else np.empty(0)

    def from_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for layer in self.layers:
            for key in LAYER_KEYS[self.variant]:
                size = layer[key].size
                layer[key] = flat[pos : pos + size].reshape(layer[key].shape).copy()
                pos += size
        if pos != flat.size:
            raise ShapeMismatch(f"flat vector size {flat.size} != parameter count {pos}")

    def copy(self) -> "ModelParams":
        return ModelParams(
            variant=self.variant,
            dims=self.dims,
            layers=[{k: v.copy() for k, v in layer.items()} for layer in self.layers],
            n_branches=self.n_branches,
            tau=self.tau,
            seed=self.seed,
        )

    def zeros_like(self) -> "ModelParams":
        out = self.copy()
        for layer in out.layers:
            for k in layer:
                layer[k] = np.zeros_like(layer[k])
        return out


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(variant: str, dims, seed: int = 0, n_branches: int = 2, tau: int = 2) -> ModelParams:
    """Glorot-uniform weights, zero biases, from a seeded generator."""
    if variant not in VARIANTS:
        raise ShapeMismatch(f"unknown variant {variant!r}")
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ShapeMismatch("dims must have at least input and output")
    if variant == "sgc" and len(dims) != 2:
        raise ShapeMismatch("sgc takes dims (p, C)")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        layer = {}
        if variant in ("nspgnn", "nspgnn_wo"):
            layer["W_m"] = _glorot(rng, d_in, n_branches)
            layer["b_m"] = np.zeros(n_branches)
            if variant == "nspgnn":
                layer["W_n"] = _glorot(rng, d_in, n_branches)
                layer["b_n"] = np.zeros(n_branches)
            layer["W_s"] = _glorot(rng, d_in, d_out)
            layer["W_o"] = _glorot(rng, d_in, d_out)
            if variant == "nspgnn":
                layer["W_d"] = _glorot(rng, d_in, d_out)
        else:
            layer["W"] = _glorot(rng, d_in, d_out)
        layers.append(layer)
    return ModelParams(variant=variant, dims=dims, layers=layers, n_branches=n_branches, tau=tau, seed=seed)


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def gates(h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-node mixing gates: logistic(hW + b), entries in (0, 1)."""
    if h.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"gate shapes inconsistent: h{h.shape} W{w.shape} b{b.shape}")
    return sigmoid(h @ w + b)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _resolve_override(value, n, n_branches):
    """Broadcast a gate override (scalar or array) to shape (n, n_branches)."""
    arr = np.asarray(value, dtype=np.float64)
    return np.broadcast_to(arr, (n, n_branches)).copy()


def nspgnn_layer(h, dual: DualKnnGraphs, lp: dict, apply_relu: bool, variant: str = "nspgnn", gate_override=None):
    """One propagation layer; returns (h_out, cache) with everything backward needs.

    Positive mixture is gated by alpha, negative mixture by beta; the
    high-pass branch applies (I - neg_mixture).
    """
    n = h.shape[0]
    taus = dual.tau_list
    cache = {"h": h, "variant": variant, "apply_relu": apply_relu}

    if gate_override is not None and gate_override.get("alpha") is not None:
        ga = _resolve_override(gate_override["alpha"], n, len(taus))
        cache["alpha_fixed"] = True
    else:
        ga = gates(h, lp["W_m"], lp["b_m"])
        cache["alpha_fixed"] = False
    cache["ga"] = ga

    ph = [dual.pos[t] @ h for t in taus]
    m = sum(ga[:, i : i + 1] * ph[i] for i in range(len(taus)))
    cache["ph"] = ph
    cache["m"] = m

    pre = h @ lp["W_s"] + m @ lp["W_o"]

    if variant == "nspgnn":
        if gate_override is not None and gate_override.get("beta") is not None:
            gb = _resolve_override(gate_override["beta"], n, len(taus))
            cache["beta_fixed"] = True
        else:
            gb = gates(h, lp["W_n"], lp["b_n"])
            cache["beta_fixed"] = False
        cache["gb"] = gb
        qh = [dual.neg[t] @ h for t in taus]
        r = h - sum(gb[:, i : i + 1] * qh[i] for i in range(len(taus)))
        cache["qh"] = qh
        cache["r"] = r
        pre = pre + r @ lp["W_d"]

    cache["pre"] = pre
    out = np.maximum(pre, 0.0) if apply_relu else pre
    return out, cache


def _nspgnn_layer_backward(dpre, dual, lp, cache, grads):
    """Accumulate parameter grads for one layer; return grad wrt layer input."""
    h = cache["h"]
    taus = dual.tau_list
    m = cache["m"]
    ga = cache["ga"]

    grads["W_s"] += h.T @ dpre
    grads["W_o"] += m.T @ dpre
    dh = dpre @ lp["W_s"].T
    dm = dpre @ lp["W_o"].T

    # positive mixture: m = sum_i ga_i * (P_i h); P_i symmetric
    dga = np.empty_like(ga)
    for i, t in enumerate(taus):
        dga[:, i] = np.sum(dm * cache["ph"][i], axis=1)
        dh += dual.pos[t] @ (ga[:, i : i + 1] * dm)

    if cache["variant"] == "nspgnn":
        r = cache["r"]
        gb = cache["gb"]
        grads["W_d"] += r.T @ dpre
        dr = dpre @ lp["W_d"].T
        dh += dr
        dqh_total = -dr  # r = h - sum_i gb_i * (Q_i h)
        dgb = np.empty_like(gb)
        for i, t in enumerate(taus):
            dgb[:, i] = np.sum(dqh_total * cache["qh"][i], axis=1)
            dh += dual.neg[t] @ (gb[:, i : i + 1] * dqh_total)
        if not cache["beta_fixed"]:
            dzb = dgb * gb * (1.0 - gb)
            grads["W_n"] += h.T @ dzb
            grads["b_n"] += dzb.sum(axis=0)
            dh += dzb @ lp["W_n"].T

    if not cache["alpha_fixed"]:
        dza = dga * ga * (1.0 - ga)
        grads["W_m"] += h.T @ dza
        grads["b_m"] += dza.sum(axis=0)
        dh += dza @ lp["W_m"].T

    return dh


def forward(params: ModelParams, dataset: Dataset, dual: DualKnnGraphs | None = None, gate_override=None, cache: dict | None = None):
    """Full forward pass; returns (S, tape) with rows of S summing to 1.

    `cache` (optional dict) memoizes graph-derived matrices across epochs.
    """
    x = dataset.features
    variant = params.variant
    tape = {"params": params, "variant": variant, "layers": []}

    if variant in ("nspgnn", "nspgnn_wo"):
        if dual is None:
            raise MissingDualGraphs(f"variant {variant!r} requires dual-kNN graphs")
        if dual.n_nodes != dataset.graph.n_nodes:
            raise ShapeMismatch("dual graphs built for a different node count")
        h = x
        n_layers = params.n_layers()
        for li, lp in enumerate(params.layers):
            apply_relu = li < n_layers - 1
            h, layer_cache = nspgnn_layer(h, dual, lp, apply_relu, variant=variant, gate_override=gate_override)
            tape["layers"].append(layer_cache)
        z = h
        tape["dual"] = dual
    elif variant == "gcn":
        if cache is not None and "ahat" in cache:
            ahat = cache["ahat"]
        else:
            ahat = normalized_adjacency(dataset.graph)
            if cache is not None:
                cache["ahat"] = ahat
        h = x
        n_layers = params.n_layers()
        for li, lp in enumerate(params.layers):
            ah = ahat @ h
            pre = ah @ lp["W"]
            tape["layers"].append({"h": h, "ah": ah, "pre": pre})
            h = np.maximum(pre, 0.0) if li < n_layers - 1 else pre
        z = h
        tape["ahat"] = ahat
    elif variant == "sgc":
        if cache is not None and "sgc_design" in cache:
            design = cache["sgc_design"]
        else:
            design = sgc_design(dataset.graph, x, params.tau)
            if cache is not None:
                cache["sgc_design"] = design
        z = design @ params.layers[0]["W"]
        tape["design"] = design
    else:
        raise ShapeMismatch(f"unknown variant {variant!r}")

    s = softmax(z)
    tape["S"] = s
    return s, tape


def sgc_design(g: Graph, x: np.ndarray, tau: int) -> np.ndarray:
    """SGC design matrix: normalized adjacency applied tau times to X."""
    ahat = normalized_adjacency(g)
    out = x.copy()
    for _ in range(tau):
        out = ahat @ out
    return out


def backward(tape: dict, ds: np.ndarray) -> ModelParams:
    """Exact reverse-mode gradients of a loss given d(loss)/dS.

    Chains through the softmax, then each layer in reverse; returns grads in
    the same structure as the parameters.
    """
    params: ModelParams = tape["params"]
    s = tape["S"]
    if ds.shape != s.shape:
        raise TapeMismatch(f"grad shape {ds.shape} does not match output {s.shape}")
    # softmax backward: dZ = S*dS - S * rowsum(S*dS)
    sds = s * ds
    dz = sds - s * sds.sum(axis=1, keepdims=True)

    grads = params.zeros_like()
    variant = params.variant

    if variant in ("nspgnn", "nspgnn_wo"):
        dual = tape["dual"]
        dpre = dz
        for li in range(params.n_layers() - 1, -1, -1):
            lc = tape["layers"][li]
            if lc["apply_relu"]:
                dpre = dpre * (lc["pre"] > 0.0)
            dpre = _nspgnn_layer_backward(dpre, dual, params.layers[li], lc, grads.layers[li])
    elif variant == "gcn":
        ahat = tape["ahat"]
        dpre = dz
        for li in range(params.n_layers() - 1, -1, -1):
            lc = tape["layers"][li]
            if li < params.n_layers() - 1:
                dpre = dpre * (lc["pre"] > 0.0)
            grads.layers[li]["W"] += lc["ah"].T @ dpre
            dpre = ahat @ (dpre @ params.layers[li]["W"].T)
    elif variant == "sgc":
        grads.layers[0]["W"] += tape["design"].T @ dz
    return grads


def gcn_forward(params: ModelParams, dataset: Dataset, cache: dict | None = None):
    """Low-pass GCN baseline; thin wrapper over forward."""
    if params.variant != "gcn":
        raise ShapeMismatch("gcn_forward requires a gcn ModelParams")
    return forward(params, dataset, cache=cache)


def nsp_sanitize(g: Graph, x: np.ndarray, keep_fraction: float | None = None, threshold: float | None = None, tau_list=(1, 2)) -> Graph:
    """Prune edges with the lowest neighbor similarity.

    Each edge is scored by the minimum over tau_list of the tau-hop cosine
    similarity of its endpoints; the lowest-scored edges are removed per the
    keep policy.
    """
    if (keep_fraction is None) == (threshold is None):
        raise ShapeMismatch("provide exactly one of keep_fraction / threshold")
    if g.n_edges == 0:
        raise EmptyGraph("cannot sanitize an empty graph")
    edges = sorted(g.edges)
    arr = np.array(edges, dtype=np.int64)
    scores = np.full(len(edges), np.inf)
    for tau in tau_list:
        sim = similarity_matrix(g, x, tau).values
        scores = np.minimum(scores, sim[arr[:, 0], arr[:, 1]])

    if threshold is not None:
        kept = [e for e, s in zip(edges, scores) if s >= threshold]
    else:
        if not (0.0 < keep_fraction <= 1.0):
            raise ShapeMismatch("keep_fraction must be in (0, 1]")
        n_keep = int(round(keep_fraction * len(edges)))
        order = sorted(range(len(edges)), key=lambda i: (-scores[i], edges[i]))
        kept = [edges[i] for i in order[:n_keep]]
    if not kept:
        raise EmptyGraph("sanitize policy removed every edge")
    return build_graph(kept, g.n_nodes)


def save_params(params: ModelParams, path) -> None:
    """Checkpoint: one JSON header line, then a little-endian float64 blob."""
    header = {
        "variant": params.variant,
        "dims": list(params.dims),
        "n_branches": params.n_branches,
        "tau": params.tau,
        "seed": params.seed,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        f.write(params.to_flat().astype("<f8").tobytes())


def load_params(path) -> ModelParams:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        blob = f.read()
    params = init_params(
        header["variant"],
        header["dims"],
        seed=header["seed"] if header["seed"] is not None else 0,
        n_branches=header["n_branches"],
        tau=header["tau"],
    )
    params.seed = header["seed"]
    flat = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    params.from_flat(flat)
    return params
