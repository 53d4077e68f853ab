"""Cluster inspection: per-component patch ranking, montage export, the
microbiologist attribute template, and species similarity profiles.

"Closest to a centroid" is operationalized as highest mean responsibility
for that component, with Euclidean distance from the patch's mean
descriptor to the component mean as a tie-break, then patch id.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import jsonfmt
from .dfb import DescriptorSet
from .errors import DataError
from .gmm import GmmModel, posteriors
from .imaging import save_png, to_uint

ATTRIBUTE_VOCABULARY: dict[str, tuple[str, ...]] = {
    "brightness": ("dark", "bright"),
    "size": ("small", "medium", "large"),
    "shape": ("circular", "oval", "longitudinal", "variform"),
    "arrangement": ("regular", "irregular"),
    "appearance": ("singular", "grouped", "fragmentary"),
    "color": ("pink", "purple", "blue", "black"),
    "quantity": ("low", "medium", "high"),
}


@dataclass(frozen=True)
class ClusterAssignment:
    """Mean responsibility mass per component for one patch."""

    patch_id: str
    mass: np.ndarray  # (K,), sums to 1

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=np.float64)
        if abs(float(m.sum()) - 1.0) > 1e-10 or (m < 0).any():
            raise DataError("cluster mass must be a distribution")
        object.__setattr__(self, "mass", m)


def cluster_mass(model: GmmModel, dset: DescriptorSet) -> np.ndarray:
    """Mean responsibility per component over the set's descriptors."""
    return posteriors(model, np.asarray(dset.descriptors, dtype=np.float64)).mean(axis=0)


def assignments(model: GmmModel, items: Sequence[tuple[str, DescriptorSet]]) -> list[ClusterAssignment]:
    return [ClusterAssignment(pid, cluster_mass(model, ds)) for pid, ds in items]


def top_patches(model: GmmModel, items: Sequence[tuple[str, DescriptorSet]],
                component: int, n: int) -> tuple[list[str], bool]:
    """Top-n patch ids for one component; `short` flags fewer than n available."""
    if n < 1:
        raise DataError("n must be >= 1")
    if not 0 <= component < model.k:
        raise DataError(f"component {component} out of range for K={model.k}")
    ranked = []
    for pid, ds in items:
        mass = cluster_mass(model, ds)[component]
        mean_desc = np.asarray(ds.descriptors, dtype=np.float64).mean(axis=0)
        dist = float(np.linalg.norm(mean_desc - model.means[component]))
        ranked.append((-mass, dist, pid))
    ranked.sort()
    ids = [pid for _, _, pid in ranked[:n]]
    return ids, len(ids) < n


def export_montage(cells: Sequence[Optional[np.ndarray]], rows: int, cols: int,
                   destination: str | Path, bit_depth: int = 8, separator: int = 2) -> None:
    """Render patches row-major into one PNG; missing cells stay black."""
    if rows < 1 or cols < 1:
        raise DataError("montage grid must be at least 1x1")
    if len(cells) > rows * cols:
        raise DataError(f"{len(cells)} patches exceed the {rows}x{cols} grid")
    shapes = {c.shape for c in cells if c is not None}
    if not shapes:
        raise DataError("montage needs at least one patch with pixels")
    if len(shapes) != 1:
        raise DataError(f"inconsistent patch shapes: {sorted(shapes)}")
    (p_h, p_w, ch) = shapes.pop()
    canvas = np.zeros(
        (rows * p_h + (rows - 1) * separator, cols * p_w + (cols - 1) * separator, ch),
        dtype=np.float64,
    )
    for idx, cell in enumerate(cells):
        if cell is None:
            continue
        r, c = divmod(idx, cols)
        top, left = r * (p_h + separator), c * (p_w + separator)
        canvas[top : top + p_h, left : left + p_w, :] = cell
    save_png(destination, to_uint(canvas, bit_depth))


def attribute_template(k: int) -> dict:
    """One empty annotation record per component plus the closed vocabularies."""
    return {
        "kind": "cluster-attributes",
        "vocabulary": {key: list(vals) for key, vals in ATTRIBUTE_VOCABULARY.items()},
        "clusters": [
            {"component": comp, **{key: None for key in ATTRIBUTE_VOCABULARY}}
            for comp in range(k)
        ],
    }


def validate_attributes(doc: dict) -> None:
    """Reject filled templates with out-of-vocabulary values."""
    if doc.get("kind") != "cluster-attributes":
        raise DataError("not a cluster attribute document")
    for record in doc.get("clusters", []):
        for key, vocab in ATTRIBUTE_VOCABULARY.items():
            value = record.get(key)
            if value is not None and value not in vocab:
                raise DataError(
                    f"component {record.get('component')}: {key}={value!r} not in {vocab}"
                )


def save_attribute_template(k: int, path: str | Path) -> None:
    jsonfmt.dump(attribute_template(k), path)


def load_attributes(path: str | Path) -> dict:
    doc = jsonfmt.load(path)
    validate_attributes(doc)
    return doc


def species_similarity(model: GmmModel,
                       items_by_species: dict[str, list[tuple[str, DescriptorSet]]]) -> tuple[list[str], np.ndarray]:
    """Cosine similarity between species' mean cluster-mass profiles."""
    codes = list(items_by_species.keys())
    profiles = []
    for code in codes:
        masses = np.vstack([cluster_mass(model, ds) for _, ds in items_by_species[code]])
        profiles.append(masses.mean(axis=0))
    prof = np.vstack(profiles)
    norms = np.linalg.norm(prof, axis=1, keepdims=True)
    unit = prof / np.maximum(norms, 1e-300)
    return codes, unit @ unit.T


def write_similarity_csv(codes: list[str], matrix: np.ndarray, path: str | Path) -> None:
    lines = ["species," + ",".join(codes)]
    for i, code in enumerate(codes):
        lines.append(code + "," + ",".join(format(v, ".17g") for v in matrix[i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
