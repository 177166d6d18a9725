"""NLL loss, Adam, the full-graph training loop, and evaluation metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, NonFiniteGradient, ShapeMismatch
from .dual_knn import DualKnnGraphs
from .graph import Dataset
from .model import ModelParams, backward, forward, init_params

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr: float = 0.01
    epochs: int = 500
    seed: int = 0
    k1: int = 10
    k2: int = 10
    variant: str = "nspgnn"
    hidden: tuple = (64,)
    tau_list: tuple = (1, 2)
    sgc_tau: int = 2

    def __post_init__(self):
        if self.lr < 0:
            raise ShapeMismatch("lr must be >= 0")
        if self.epochs < 1:
            raise ShapeMismatch("epochs must be >= 1")
        if self.k1 < 1 or self.k2 < 1:
            raise ShapeMismatch("k1, k2 must be >= 1")


@dataclass
class TrainResult:
    params: ModelParams
    best_params: ModelParams
    train_losses: list
    val_accuracies: list
    best_epoch: int
    best_val_accuracy: float
    test_accuracy: float
    wall_clock_sec: float


def nll_loss(s: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Masked mean negative log-likelihood of the true classes."""
    if not mask.any():
        raise EmptyMask("nll_loss over empty mask")
    idx = np.where(mask)[0]
    probs = s[idx, labels[idx]]
    return float(-np.mean(np.log(probs)))


def nll_grad_wrt_s(s: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """d(nll_loss)/dS; combined with softmax backward this yields (S-Y)/|mask|."""
    if not mask.any():
        raise EmptyMask("nll gradient over empty mask")
    grad = np.zeros_like(s)
    idx = np.where(mask)[0]
    grad[idx, labels[idx]] = -1.0 / (s[idx, labels[idx]] * idx.size)
    return grad


def accuracy(s: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    """Masked argmax accuracy; argmax ties resolve to the lowest class index."""
    if not mask.any():
        raise EmptyMask("accuracy over empty mask")
    idx = np.where(mask)[0]
    pred = np.argmax(s[idx], axis=1)  # np.argmax takes the first (lowest) index on ties
    return float(np.mean(pred == labels[idx]))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(state: AdamState, params_flat: np.ndarray, grads_flat: np.ndarray, lr: float):
    """One bias-corrected Adam update; returns (new_state, new_params)."""
    if grads_flat.shape != params_flat.shape:
        raise ShapeMismatch("gradient/parameter size mismatch")
    if not np.isfinite(grads_flat).all():
        raise NonFiniteGradient("non-finite gradient in Adam step")
    t = state.t + 1
    m = ADAM_BETA1 * state.m + (1.0 - ADAM_BETA1) * grads_flat
    v = ADAM_BETA2 * state.v + (1.0 - ADAM_BETA2) * grads_flat**2
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new_params = params_flat - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return AdamState(m=m, v=v, t=t), new_params


def train(dataset: Dataset, dual: DualKnnGraphs | None, cfg: TrainConfig) -> TrainResult:
    """Full-graph training with best-validation-accuracy model selection.

    Deterministic given (seed, thread count). The reported test accuracy is
    recomputed by replaying the best checkpoint.
    """
    t0 = time.perf_counter()
    p = dataset.features.shape[1]
    if cfg.variant == "sgc":
        dims = (p, dataset.n_classes)
    else:
        dims = (p, *cfg.hidden, dataset.n_classes)
    params = init_params(
        cfg.variant, dims, seed=cfg.seed,
        n_branches=len(cfg.tau_list), tau=cfg.sgc_tau,
    )
    flat = params.to_flat()
    state = AdamState.zeros(flat.size)
    cache: dict = {}
    split = dataset.split
    labels = dataset.labels

    train_losses = []
    val_accuracies = []
    best_val = -1.0
    best_epoch = -1
    best_flat = flat.copy()

    has_val = bool(split.val.any())
    for epoch in range(cfg.epochs):
        s, tape = forward(params, dataset, dual=dual, cache=cache)
        loss = nll_loss(s, labels, split.train)
        if not np.isfinite(loss):
            raise NonFiniteGradient(f"training loss diverged at epoch {epoch}")
        train_losses.append(loss)
        val_acc = accuracy(s, labels, split.val) if has_val else accuracy(s, labels, split.train)
        val_accuracies.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            best_epoch = epoch
            best_flat = flat.copy()

        grads = backward(tape, nll_grad_wrt_s(s, labels, split.train))
        state, flat = adam_step(state, flat, grads.to_flat(), cfg.lr)
        params.from_flat(flat)

    best_params = params.copy()
    best_params.from_flat(best_flat)
    s_best, _ = forward(best_params, dataset, dual=dual, cache=cache)
    if split.test.any():
        test_acc = accuracy(s_best, labels, split.test)
    else:
        test_acc = float("nan")
    return TrainResult(
        params=params,
        best_params=best_params,
        train_losses=train_losses,
        val_accuracies=val_accuracies,
        best_epoch=best_epoch,
        best_val_accuracy=best_val,
        test_accuracy=test_acc,
        wall_clock_sec=time.perf_counter() - t0,
    )
