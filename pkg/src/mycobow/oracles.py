"""Naive reference implementations for tiny instances.

These evaluate the defining formulas with plain Python loops and share no
code with the optimized numpy paths; tests compare the two routes.  Caps
keep them honest (and fast): exceeding a cap raises OracleCapError.
"""

from __future__ import annotations

import itertools
import math

from .errors import MycobowError

MAX_COMPONENTS = 8
MAX_DIM = 8
MAX_POINTS = 64
MAX_SVM_POINTS = 8
MAX_SVM_DIM = 6


class OracleCapError(MycobowError):
    """Instance exceeds the documented oracle size caps."""


def _check_gmm_caps(weights, means, variances, n_points: int) -> None:
    k = len(weights)
    d = len(means[0])
    if k > MAX_COMPONENTS or d > MAX_DIM or n_points > MAX_POINTS:
        raise OracleCapError(f"instance K={k}, D={d}, N={n_points} exceeds oracle caps")
    if len(means) != k or len(variances) != k:
        raise OracleCapError("inconsistent component counts")


def _density(x, mean, var) -> float:
    p = 1.0
    for d in range(len(x)):
        p *= math.exp(-((x[d] - mean[d]) ** 2) / (2.0 * var[d])) / math.sqrt(2.0 * math.pi * var[d])
    return p


def oracle_gmm_responsibilities(weights, means, variances, x) -> list[float]:
    """Posterior component probabilities by direct density evaluation."""
    _check_gmm_caps(weights, means, variances, 1)
    numer = [weights[k] * _density(x, means[k], variances[k]) for k in range(len(weights))]
    total = sum(numer)
    return [v / total for v in numer]


def oracle_fv(weights, means, variances, points) -> list[float]:
    """Term-by-term Fisher vector: mean block then variance block."""
    _check_gmm_caps(weights, means, variances, len(points))
    k_count = len(weights)
    d_count = len(means[0])
    n = len(points)
    gammas = [oracle_gmm_responsibilities(weights, means, variances, x) for x in points]
    mean_block: list[float] = []
    var_block: list[float] = []
    for k in range(k_count):
        for d in range(d_count):
            sigma = math.sqrt(variances[k][d])
            acc_mu = 0.0
            acc_var = 0.0
            for i in range(n):
                z = (points[i][d] - means[k][d]) / sigma
                acc_mu += gammas[i][k] * z
                acc_var += gammas[i][k] * (z * z - 1.0)
            mean_block.append(acc_mu / (n * math.sqrt(weights[k])))
            var_block.append(acc_var / (n * math.sqrt(2.0 * weights[k])))
    return mean_block + var_block


def oracle_svm_small(points, labels, c: float, stages: int = 10, grid: int = 9) -> list[float]:
    """Max-margin weights (bias as last coordinate) via a zooming dual grid.

    Maximizes D(a) = sum a_i - 0.5 ||sum a_i y_i x~_i||^2 over the box
    [0, C]^M, where x~ appends the constant bias feature 1.  The grid is
    refined around the incumbent `stages` times, `grid` points per axis.
    Returns w~ = sum a_i y_i x~_i at the best grid point.
    """
    m = len(points)
    if m > MAX_SVM_POINTS or len(points[0]) > MAX_SVM_DIM:
        raise OracleCapError(f"instance M={m}, F={len(points[0])} exceeds oracle caps")
    if len(labels) != m:
        raise OracleCapError("labels/points length mismatch")
    aug = [list(p) + [1.0] for p in points]
    f = len(aug[0])

    def dual_and_w(alpha):
        w = [0.0] * f
        total = 0.0
        for i in range(m):
            total += alpha[i]
            coef = alpha[i] * labels[i]
            for j in range(f):
                w[j] += coef * aug[i][j]
        norm2 = sum(v * v for v in w)
        return total - 0.5 * norm2, w

    lo = [0.0] * m
    hi = [float(c)] * m
    best_alpha = [0.0] * m
    best_val, best_w = dual_and_w(best_alpha)
    for _ in range(stages):
        axes = []
        for i in range(m):
            step = (hi[i] - lo[i]) / (grid - 1)
            axes.append([lo[i] + step * t for t in range(grid)])
        for combo in itertools.product(*axes):
            val, w = dual_and_w(combo)
            if val > best_val:
                best_val, best_w, best_alpha = val, w, list(combo)
        for i in range(m):
            step = (hi[i] - lo[i]) / (grid - 1)
            lo[i] = max(0.0, best_alpha[i] - step)
            hi[i] = min(float(c), best_alpha[i] + step)
    return best_w
