"""Diagonal-covariance Gaussian mixtures: k-means++ init and EM fitting.

All density work is log-domain with log-sum-exp, all accumulation is
float64, and variances are floored at
max(variance_floor_fraction * global per-dimension variance, 1e-10)
so duplicated descriptors cannot create singular components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import jsonfmt
from .errors import DataError, NumericalError

ABS_VARIANCE_FLOOR = 1e-10
MIN_WEIGHT = 1e-8
EMPTY_COMPONENT_MASS = 1e-10


@dataclass(frozen=True)
class GmmModel:
    """K diagonal Gaussians: weights (K,), means (K, D), variances (K, D)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    floor: np.ndarray  # per-dimension variance floor actually applied

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        fl = np.asarray(self.floor, dtype=np.float64)
        if w.ndim != 1 or mu.ndim != 2 or var.shape != mu.shape or w.shape[0] != mu.shape[0]:
            raise DataError("inconsistent mixture shapes")
        if fl.shape != (mu.shape[1],):
            raise DataError("floor must be per-dimension")
        if not (np.isfinite(w).all() and np.isfinite(mu).all() and np.isfinite(var).all()):
            raise DataError("mixture parameters must be finite")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DataError(f"weights sum to {w.sum()!r}, not 1")
        if (w < MIN_WEIGHT).any():
            raise DataError(f"weights must be >= {MIN_WEIGHT}")
        if (var < np.maximum(fl, ABS_VARIANCE_FLOOR) - 1e-300).any():
            raise DataError("variances below the floor")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "floor", fl)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class EmConfig:
    k: int
    max_iterations: int = 100
    tolerance: float = 1e-6
    seed: int = 0
    variance_floor_fraction: float = 1e-4

    def __post_init__(self):
        if self.k < 1:
            raise DataError(f"K must be >= 1, got {self.k}")
        if self.tolerance <= 0:
            raise DataError("tolerance must be > 0")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")


@dataclass
class FitTrace:
    """Mean log-likelihood per iteration plus reseed events."""

    log_likelihoods: list[float] = field(default_factory=list)
    converged: bool = False
    reseeds: list[tuple[int, int]] = field(default_factory=list)  # (iteration, component)

    @property
    def iterations(self) -> int:
        return len(self.log_likelihoods)

    def check_monotone(self, slack: float = 1e-8) -> bool:
        vals = self.log_likelihoods
        return all(vals[i + 1] >= vals[i] - slack for i in range(len(vals) - 1))


def _variance_floor(data: np.ndarray, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    global_var = data.var(axis=0)
    floor = np.maximum(fraction * global_var, ABS_VARIANCE_FLOOR)
    return global_var, floor


def kmeanspp_init(descriptors: np.ndarray, k: int, seed: int,
                  variance_floor_fraction: float = 1e-4) -> GmmModel:
    """k-means++ D^2 seeding; uniform weights; global (floored) variances."""
    data = np.asarray(descriptors, dtype=np.float64)
    if data.ndim != 2:
        raise DataError("descriptors must be 2-D")
    n = data.shape[0]
    if n < k:
        raise DataError(f"need at least K={k} points, got {n}")
    global_var, floor = _variance_floor(data, variance_floor_fraction)
    if k > 1 and float(global_var.sum()) == 0.0:
        raise DataError("all points identical; cannot seed more than one component")

    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # remaining candidates coincide with chosen centers
            remaining = np.setdiff1d(np.arange(n), np.array(chosen, dtype=int))
            idx = int(rng.choice(remaining))
        chosen.append(idx)
        d2 = np.minimum(d2, ((data - data[idx]) ** 2).sum(axis=1))

    means = data[np.array(chosen, dtype=int)].copy()
    weights = np.full(k, 1.0 / k)
    variances = np.tile(np.maximum(global_var, floor), (k, 1))
    return GmmModel(weights=weights, means=means, variances=variances, floor=floor)


def _log_joint(model: GmmModel, data: np.ndarray) -> np.ndarray:
    """(N, K) matrix of log pi_k + log N(x_n; mu_k, diag var_k)."""
    inv_var = 1.0 / model.variances  # (K, D)
    log_norm = -0.5 * (model.dim * np.log(2.0 * np.pi) + np.log(model.variances).sum(axis=1))
    # ||x - mu||^2_sigma expanded into three GEMMs
    quad = (
        (data * data) @ inv_var.T
        - 2.0 * (data @ (model.means * inv_var).T)
        + ((model.means * model.means) * inv_var).sum(axis=1)[None, :]
    )
    return np.log(model.weights)[None, :] + log_norm[None, :] - 0.5 * quad


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def posteriors(model: GmmModel, data: np.ndarray) -> np.ndarray:
    """(N, K) responsibilities; each row sums to 1."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.dim:
        raise DataError(f"descriptor dimension {data.shape} does not match model D={model.dim}")
    lj = _log_joint(model, data)
    return np.exp(lj - _logsumexp(lj, axis=1)[:, None])


def responsibilities(model: GmmModel, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities for a single descriptor."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return posteriors(model, x)[0]


def log_likelihood(model: GmmModel, descriptors: np.ndarray) -> float:
    """Mean over points of log sum_k pi_k N(x; mu_k, var_k)."""
    data = np.asarray(descriptors, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != model.dim:
        raise DataError(f"descriptor dimension {data.shape} does not match model D={model.dim}")
    return float(_logsumexp(_log_joint(model, data), axis=1).mean())


def em_fit(descriptors: np.ndarray, config: EmConfig) -> tuple[GmmModel, FitTrace]:
    """EM to convergence (relative mean-LL change < tolerance) or max iterations.

    Components whose total responsibility falls below 1e-10 are re-seeded at
    the point with the lowest maximum responsibility; the event is recorded.
    """
    data = np.asarray(descriptors, dtype=np.float64)
    if data.ndim != 2:
        raise DataError("descriptors must be 2-D")
    n = data.shape[0]
    if n < config.k:
        raise DataError(f"need at least K={config.k} points, got {n}")
    model = kmeanspp_init(data, config.k, config.seed, config.variance_floor_fraction)
    floor = model.floor
    global_var = np.maximum(data.var(axis=0), floor)
    data_sq = data * data

    trace = FitTrace()
    prev_ll: Optional[float] = None
    weights, means, variances = model.weights, model.means, model.variances
    for iteration in range(config.max_iterations):
        model = GmmModel(weights=weights, means=means, variances=variances, floor=floor)
        lj = _log_joint(model, data)
        per_point = _logsumexp(lj, axis=1)
        ll = float(per_point.mean())
        if not np.isfinite(ll):
            raise NumericalError("log-likelihood became non-finite")
        trace.log_likelihoods.append(ll)
        if prev_ll is not None:
            rel = (ll - prev_ll) / max(abs(prev_ll), 1e-8)
            if rel < config.tolerance:
                trace.converged = True
                break
        prev_ll = ll

        gamma = np.exp(lj - per_point[:, None])  # (N, K)
        mass = gamma.sum(axis=0)  # (K,)
        empty = np.flatnonzero(mass < EMPTY_COMPONENT_MASS)
        if empty.size:
            worst = np.argsort(gamma.max(axis=1))  # least-claimed points first
            for slot, comp in enumerate(empty):
                point = int(worst[slot % n])
                gamma[:, comp] = 0.0
                gamma[point, :] = 0.0
                gamma[point, comp] = 1.0
                trace.reseeds.append((iteration, int(comp)))
            mass = np.maximum(gamma.sum(axis=0), 1e-300)
        weights = np.maximum(mass / mass.sum(), MIN_WEIGHT)
        weights = weights / weights.sum()
        means = (gamma.T @ data) / mass[:, None]
        second = (gamma.T @ data_sq) / mass[:, None]
        variances = np.maximum(second - means * means, floor[None, :])
        # re-seeded components restart wide
        for it, comp in trace.reseeds:
            if it == iteration:
                variances[comp] = global_var

    model = GmmModel(weights=weights, means=means, variances=variances, floor=floor)
    return model, trace


def save_gmm(model: GmmModel, path: str | Path, seed: Optional[int] = None,
             trace: Optional[FitTrace] = None) -> None:
    doc = {
        "kind": "gmm",
        "k": model.k,
        "d": model.dim,
        "weights": model.weights,
        "means": model.means,
        "variances": model.variances,
        "floor": model.floor,
        "seed": seed,
        "trace": None
        if trace is None
        else {
            "iterations": trace.iterations,
            "converged": trace.converged,
            "final_log_likelihood": trace.log_likelihoods[-1] if trace.log_likelihoods else None,
            "reseeds": [[it, comp] for it, comp in trace.reseeds],
        },
    }
    jsonfmt.dump(doc, path)


def load_gmm(path: str | Path) -> GmmModel:
    doc = jsonfmt.load(path)
    if doc.get("kind") != "gmm":
        raise DataError(f"{path} is not a mixture model document")
    return GmmModel(
        weights=np.asarray(doc["weights"], dtype=np.float64),
        means=np.asarray(doc["means"], dtype=np.float64),
        variances=np.asarray(doc["variances"], dtype=np.float64),
        floor=np.asarray(doc["floor"], dtype=np.float64),
    )
