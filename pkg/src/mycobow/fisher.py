"""Fisher vector encoding of descriptor sets under a Gaussian mixture.

For component k, dimension d, with responsibilities g_n(k), z = (x - mu)/sigma:

    mean block      (1 / (N sqrt(pi_k)))   * sum_n g_n(k) * z_{n,d}
    variance block  (1 / (N sqrt(2 pi_k))) * sum_n g_n(k) * (z_{n,d}^2 - 1)

laid out mean block first, component-major, then variance block (2*K*D
total).  Weight-gradient terms are deliberately excluded.  Improved-FV
normalization is the signed power transform followed by L2 normalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import jsonfmt
from .dfb import DescriptorSet
from .errors import DataError
from .gmm import GmmModel, posteriors


@dataclass(frozen=True)
class FisherVector:
    values: np.ndarray  # (2*K*D,) float64
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise DataError("Fisher vector must be 1-D")
        if not np.isfinite(arr).all():
            raise DataError("Fisher vector contains non-finite values")
        if self.normalized:
            norm = float(np.linalg.norm(arr))
            if norm != 0.0 and abs(norm - 1.0) > 1e-10:
                raise DataError(f"normalized flag set but norm is {norm!r}")
        object.__setattr__(self, "values", arr)


def fv_dimension(model: GmmModel) -> int:
    return 2 * model.k * model.dim


def encode(model: GmmModel, dset: DescriptorSet) -> FisherVector:
    """Raw (unnormalized) Fisher vector of one descriptor set."""
    if dset.dim != model.dim:
        raise DataError(f"descriptor dimension {dset.dim} does not match model D={model.dim}")
    data = np.asarray(dset.descriptors, dtype=np.float64)
    n = data.shape[0]
    gamma = posteriors(model, data)  # (N, K)
    sigma = np.sqrt(model.variances)  # (K, D)
    z = (data[None, :, :] - model.means[:, None, :]) / sigma[:, None, :]  # (K, N, D)
    gt = gamma.T  # (K, N)
    mean_block = np.einsum("kn,knd->kd", gt, z)
    var_block = np.einsum("kn,knd->kd", gt, z * z) - gamma.sum(axis=0)[:, None]
    mean_block /= (n * np.sqrt(model.weights))[:, None]
    var_block /= (n * np.sqrt(2.0 * model.weights))[:, None]
    return FisherVector(np.concatenate([mean_block.ravel(), var_block.ravel()]), normalized=False)


def normalize(fv: FisherVector, alpha: float = 0.5) -> FisherVector:
    """Signed power |z|^alpha then L2 normalization; zero stays zero."""
    if not 0.0 < alpha <= 1.0:
        raise DataError(f"alpha must be in (0, 1], got {alpha}")
    powered = np.sign(fv.values) * np.abs(fv.values) ** alpha
    norm = float(np.linalg.norm(powered))
    if norm == 0.0:
        return FisherVector(powered, normalized=True)
    return FisherVector(powered / norm, normalized=True)


def encode_normalized(model: GmmModel, dset: DescriptorSet, alpha: float = 0.5) -> FisherVector:
    return normalize(encode(model, dset), alpha)


@dataclass(frozen=True)
class WhiteningTransform:
    """PCA whitening fitted on training descriptors only."""

    mean: np.ndarray  # (D,)
    components: np.ndarray  # (D, D') eigenvectors scaled by 1/sqrt(eigenvalue)

    @property
    def out_dim(self) -> int:
        return self.components.shape[1]

    def transform(self, data: np.ndarray) -> np.ndarray:
        return (np.asarray(data, dtype=np.float64) - self.mean) @ self.components

    def transform_set(self, dset: DescriptorSet) -> DescriptorSet:
        return DescriptorSet(
            descriptors=self.transform(dset.descriptors).astype(np.float32),
            grid=dset.grid,
            source_id=dset.source_id,
        )


def fit_whitening(data: np.ndarray, out_dim: int) -> WhiteningTransform:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DataError("whitening needs at least 2 descriptors")
    out_dim = min(out_dim, data.shape[1])
    mean = data.mean(axis=0)
    centered = data - mean
    cov = (centered.T @ centered) / data.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:out_dim]
    vals = np.maximum(eigvals[order], 1e-12)
    vecs = eigvecs[:, order]
    # deterministic sign: largest-|entry| coordinate is positive
    for j in range(vecs.shape[1]):
        pivot = np.argmax(np.abs(vecs[:, j]))
        if vecs[pivot, j] < 0:
            vecs[:, j] = -vecs[:, j]
    return WhiteningTransform(mean=mean, components=vecs / np.sqrt(vals)[None, :])


def save_whitening(t: WhiteningTransform, path: str | Path) -> None:
    jsonfmt.dump({"kind": "whitening", "mean": t.mean, "components": t.components}, path)


def load_whitening(path: str | Path) -> Optional[WhiteningTransform]:
    doc = jsonfmt.load(path)
    if doc.get("kind") != "whitening":
        raise DataError(f"{path} is not a whitening document")
    return WhiteningTransform(
        mean=np.asarray(doc["mean"], dtype=np.float64),
        components=np.asarray(doc["components"], dtype=np.float64),
    )
