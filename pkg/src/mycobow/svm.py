"""One-vs-rest linear SVM trained by dual coordinate descent.

Per class: min_w 0.5 ||w~||^2 + C sum_i max(0, 1 - y_i w~ . x~_i), where x~
appends a constant bias feature (value 1, so the bias is regularized with
the weights).  Coordinate updates follow the standard projected-Newton rule
on the box-constrained dual; training stops when the duality gap certifies
the solution (gap <= gap_tolerance) or at the epoch cap.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import jsonfmt
from .data import NUM_SPECIES, SPECIES_ORDER, SpeciesLabel
from .errors import DataError

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

GAP_TOLERANCE = 1e-6
MAX_EPOCHS = 10000


@njit(cache=True)
def _cd_epoch(aug, y, q_diag, alpha, w, order, c):
    """One sequential pass over the permuted coordinates (mutates alpha, w).

    Dots are written as explicit loops so the float operation order is fixed
    and identical with or without compilation.
    """
    m, f = aug.shape
    for t in range(m):
        i = order[t]
        s = 0.0
        for j in range(f):
            s += aug[i, j] * w[j]
        g = y[i] * s - 1.0
        a_old = alpha[i]
        a_new = a_old - g / q_diag[i]
        if a_new < 0.0:
            a_new = 0.0
        elif a_new > c:
            a_new = c
        if a_new != a_old:
            alpha[i] = a_new
            coef = (a_new - a_old) * y[i]
            for j in range(f):
                w[j] += coef * aug[i, j]


@dataclass(frozen=True)
class BinaryFit:
    w: np.ndarray  # (F,)
    b: float
    gap: float
    epochs: int


def train_binary(features: np.ndarray, y: np.ndarray, c: float, rng: np.random.Generator,
                 gap_tolerance: float = GAP_TOLERANCE, max_epochs: int = MAX_EPOCHS) -> BinaryFit:
    """Dual coordinate descent on one binary problem; y in {-1, +1}."""
    x = np.asarray(features, dtype=np.float64)
    m = x.shape[0]
    aug = np.ascontiguousarray(np.hstack([x, np.ones((m, 1))]))
    yv = np.asarray(y, dtype=np.float64)
    q_diag = np.einsum("ij,ij->i", aug, aug)
    alpha = np.zeros(m)
    w = np.zeros(aug.shape[1])
    gap = np.inf
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(m)
        _cd_epoch(aug, yv, q_diag, alpha, w, order, float(c))
        # exact gap on the recomputed weight vector (also cancels drift)
        w = aug.T @ (alpha * yv)
        margins = yv * (aug @ w)
        hinge = np.maximum(0.0, 1.0 - margins).sum()
        wnorm2 = float(w @ w)
        primal = 0.5 * wnorm2 + c * hinge
        dual = float(alpha.sum()) - 0.5 * wnorm2
        gap = primal - dual
        if gap <= gap_tolerance:
            break
    return BinaryFit(w=w[:-1].copy(), b=float(w[-1]), gap=float(gap), epochs=epoch)


@dataclass(frozen=True)
class SvmModel:
    """Per-class hyperplanes in fixed species order; absent classes score -inf."""

    classes: tuple[SpeciesLabel, ...]
    weights: np.ndarray  # (n_classes, F)
    biases: np.ndarray  # (n_classes,)
    c: float
    missing: tuple[SpeciesLabel, ...] = ()
    gaps: tuple[float, ...] = ()

    def __post_init__(self):
        if self.weights.shape[0] != len(self.classes) or self.biases.shape[0] != len(self.classes):
            raise DataError("class/weight count mismatch")
        order = [cls.index for cls in self.classes]
        if order != sorted(order):
            raise DataError("classes must follow the fixed species order")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]


def train_svm_ovr(features: np.ndarray, labels: list[SpeciesLabel], c: float, seed: int,
                  gap_tolerance: float = GAP_TOLERANCE, max_epochs: int = MAX_EPOCHS) -> SvmModel:
    """One binary problem per class present in `labels`, seeded and deterministic."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != len(labels):
        raise DataError("features/labels shape mismatch")
    if c <= 0:
        raise DataError(f"C must be > 0, got {c}")
    present = [cls for cls in SPECIES_ORDER if cls in set(labels)]
    if len(present) < 2:
        raise DataError("need at least 2 classes to train one-vs-rest")
    missing = tuple(cls for cls in SPECIES_ORDER if cls not in set(labels))
    label_arr = np.array([lab.index for lab in labels])
    ws, bs, gaps = [], [], []
    for cls in present:
        y = np.where(label_arr == cls.index, 1.0, -1.0)
        rng = np.random.default_rng([seed, cls.index])
        fit = train_binary(x, y, c, rng, gap_tolerance, max_epochs)
        ws.append(fit.w)
        bs.append(fit.b)
        gaps.append(fit.gap)
    return SvmModel(
        classes=tuple(present),
        weights=np.vstack(ws),
        biases=np.array(bs),
        c=float(c),
        missing=missing,
        gaps=tuple(gaps),
    )


def decision_scores(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """9-vector of w_c . x + b_c in fixed class order; missing classes -inf."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.feature_dim,):
        raise DataError(f"feature dimension {x.shape} does not match model F={model.feature_dim}")
    scores = np.full(NUM_SPECIES, -np.inf)
    vals = model.weights @ x + model.biases
    for cls, v in zip(model.classes, vals):
        scores[cls.index] = v
    return scores


def decision_matrix(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """(M, 9) decision scores for a feature matrix."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != model.feature_dim:
        raise DataError(f"feature dimension {feats.shape} does not match model F={model.feature_dim}")
    scores = np.full((feats.shape[0], NUM_SPECIES), -np.inf)
    vals = feats @ model.weights.T + model.biases[None, :]
    for col, cls in enumerate(model.classes):
        scores[:, cls.index] = vals[:, col]
    return scores


def save_svm(model: SvmModel, path: str | Path, seed: int | None = None) -> None:
    jsonfmt.dump(
        {
            "kind": "svm",
            "classes": [cls.value for cls in model.classes],
            "weights": model.weights,
            "biases": model.biases,
            "c": model.c,
            "missing": [cls.value for cls in model.missing],
            "gaps": list(model.gaps),
            "seed": seed,
        },
        path,
    )


def load_svm(path: str | Path) -> SvmModel:
    doc = jsonfmt.load(path)
    if doc.get("kind") != "svm":
        raise DataError(f"{path} is not an SVM document")
    return SvmModel(
        classes=tuple(SpeciesLabel.parse(v) for v in doc["classes"]),
        weights=np.asarray(doc["weights"], dtype=np.float64),
        biases=np.asarray(doc["biases"], dtype=np.float64),
        c=float(doc["c"]),
        missing=tuple(SpeciesLabel.parse(v) for v in doc["missing"]),
        gaps=tuple(float(g) for g in doc.get("gaps", [])),
    )
