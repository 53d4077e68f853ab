"""Softmax baseline head on mean-pooled descriptors.

One hidden layer (affine -> relu -> affine -> softmax) trained with
mini-batch gradient descent on cross-entropy.  A seeded 10% holdout picks
the best epoch; the returned parameters are that snapshot.  The output
layer always has one unit per species code.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import jsonfmt
from .data import NUM_SPECIES, SpeciesLabel
from .errors import DataError


@dataclass(frozen=True)
class HeadConfig:
    hidden: int = 512
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    holdout_fraction: float = 0.1


@dataclass(frozen=True)
class BaselineHead:
    w1: np.ndarray  # (D, H)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H, 9)
    b2: np.ndarray  # (9,)
    config: HeadConfig = field(default_factory=HeadConfig)

    def __post_init__(self):
        if self.w2.shape[1] != NUM_SPECIES or self.b2.shape != (NUM_SPECIES,):
            raise DataError(f"output layer must have {NUM_SPECIES} units")

    @property
    def input_dim(self) -> int:
        return self.w1.shape[0]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(head: BaselineHead, x: np.ndarray) -> np.ndarray:
    """(M, 9) class probabilities."""
    x = np.asarray(x, dtype=np.float64)
    hidden = np.maximum(0.0, x @ head.w1 + head.b1)
    return _softmax(hidden @ head.w2 + head.b2)


def loss(params: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
         x: np.ndarray, onehot: np.ndarray) -> float:
    """Mean cross-entropy; pure in the parameters (finite-difference target)."""
    w1, b1, w2, b2 = params
    hidden = np.maximum(0.0, x @ w1 + b1)
    logits = hidden @ w2 + b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-(onehot * log_probs).sum() / x.shape[0])


def gradients(params: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
              x: np.ndarray, onehot: np.ndarray):
    """Analytic gradients of `loss` with respect to all four parameters."""
    w1, b1, w2, b2 = params
    m = x.shape[0]
    pre = x @ w1 + b1
    hidden = np.maximum(0.0, pre)
    probs = _softmax(hidden @ w2 + b2)
    dlogits = (probs - onehot) / m
    gw2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ w2.T
    dhidden = dhidden * (pre > 0.0)
    gw1 = x.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return gw1, gb1, gw2, gb2


def _onehot(labels: list[SpeciesLabel]) -> np.ndarray:
    out = np.zeros((len(labels), NUM_SPECIES))
    for i, lab in enumerate(labels):
        out[i, lab.index] = 1.0
    return out


def init_head(input_dim: int, config: HeadConfig) -> BaselineHead:
    rng = np.random.default_rng([config.seed, 101])
    w1 = rng.standard_normal((input_dim, config.hidden)) * np.sqrt(2.0 / input_dim)
    w2 = rng.standard_normal((config.hidden, NUM_SPECIES)) * np.sqrt(2.0 / config.hidden)
    return BaselineHead(w1=w1, b1=np.zeros(config.hidden), w2=w2,
                        b2=np.zeros(NUM_SPECIES), config=config)


def train_baseline_head(pooled: np.ndarray, labels: list[SpeciesLabel],
                        config: HeadConfig) -> BaselineHead:
    """Mini-batch gradient descent; returns the best-holdout-epoch snapshot."""
    x = np.asarray(pooled, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise DataError("pooled features/labels shape mismatch")
    if len({lab for lab in labels}) < 2:
        raise DataError("need at least 2 classes to train the baseline head")
    onehot = _onehot(labels)
    m = x.shape[0]
    rng = np.random.default_rng([config.seed, 202])
    order = rng.permutation(m)
    n_val = max(1, int(round(config.holdout_fraction * m))) if m > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    if train_idx.size == 0:
        train_idx, val_idx = order, order[:0]
    xt, yt = x[train_idx], onehot[train_idx]
    xv = x[val_idx]
    yv = np.array([labels[i].index for i in val_idx])

    head = init_head(x.shape[1], config)
    params = [head.w1.copy(), head.b1.copy(), head.w2.copy(), head.b2.copy()]
    best = [p.copy() for p in params]
    best_acc = -1.0
    n_train = xt.shape[0]
    for _ in range(config.epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            idx = perm[start : start + config.batch_size]
            grads = gradients(tuple(params), xt[idx], yt[idx])
            for p, g in zip(params, grads):
                p -= config.learning_rate * g
        if xv.shape[0]:
            probs = forward(replace(head, w1=params[0], b1=params[1], w2=params[2], b2=params[3]), xv)
            acc = float((probs.argmax(axis=1) == yv).mean())
            if acc > best_acc:
                best_acc = acc
                best = [p.copy() for p in params]
    final = best if xv.shape[0] else params
    return BaselineHead(w1=final[0], b1=final[1], w2=final[2], b2=final[3], config=config)


def save_head(head: BaselineHead, path: str | Path) -> None:
    jsonfmt.dump(
        {
            "kind": "baseline-head",
            "w1": head.w1,
            "b1": head.b1,
            "w2": head.w2,
            "b2": head.b2,
            "config": {
                "hidden": head.config.hidden,
                "learning_rate": head.config.learning_rate,
                "epochs": head.config.epochs,
                "batch_size": head.config.batch_size,
                "seed": head.config.seed,
                "holdout_fraction": head.config.holdout_fraction,
            },
        },
        path,
    )


def load_head(path: str | Path) -> BaselineHead:
    doc = jsonfmt.load(path)
    if doc.get("kind") != "baseline-head":
        raise DataError(f"{path} is not a baseline head document")
    cfg = HeadConfig(**doc["config"])
    return BaselineHead(
        w1=np.asarray(doc["w1"], dtype=np.float64),
        b1=np.asarray(doc["b1"], dtype=np.float64),
        w2=np.asarray(doc["w2"], dtype=np.float64),
        b2=np.asarray(doc["b2"], dtype=np.float64),
        config=cfg,
    )
