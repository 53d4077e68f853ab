"""Hyperparameter grid search with scan-grouped, species-stratified folds.

Every patch of a scan lands in exactly one internal fold, and for each
grid cell the dictionary (GMM, optional whitening) is fitted on the
internal-train descriptors of that fold only, so model selection sees no
validation data at any stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import detrng
from .config import EmOptions, FisherOptions, Grids
from .data import SPECIES_ORDER, SpeciesLabel
from .dfb import DescriptorSet
from .errors import DataError
from .fisher import fit_whitening
from .gmm import EmConfig, em_fit
from .pipeline import encode_features, pool_descriptors
from .svm import decision_matrix, train_svm_ovr


@dataclass(frozen=True)
class HyperParams:
    c_grid: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    k_grid: tuple[int, ...] = (16, 32, 64)

    def __post_init__(self):
        if not self.c_grid or not self.k_grid:
            raise DataError("hyperparameter grids must be non-empty")

    @classmethod
    def from_grids(cls, grids: Grids) -> "HyperParams":
        return cls(c_grid=grids.c_values, k_grid=grids.k_values)


@dataclass
class GridCell:
    k: int
    c: float
    fold_accuracies: list[float]

    @property
    def mean_accuracy(self) -> float:
        return sum(self.fold_accuracies) / len(self.fold_accuracies)


@dataclass
class GridSearchResult:
    selected_k: int
    selected_c: float
    cells: list[GridCell]
    fold_audit: list[dict] = field(default_factory=list)  # per fold: train/val scan ids


def stratified_group_folds(scans: Sequence[tuple[str, SpeciesLabel]], n_folds: int,
                           seed: int) -> list[list[str]]:
    """Deal each species' scans round-robin into folds after a seeded shuffle."""
    by_class: dict[SpeciesLabel, list[str]] = {}
    for scan_id, label in scans:
        by_class.setdefault(label, []).append(scan_id)
    for label, ids in by_class.items():
        if len(ids) < n_folds:
            raise DataError(
                f"species {label.value} has {len(ids)} scans; {n_folds}-fold selection needs at least {n_folds}"
            )
    rng = np.random.default_rng(detrng.derive_seed(seed, 31))
    folds: list[list[str]] = [[] for _ in range(n_folds)]
    for label in SPECIES_ORDER:
        ids = by_class.get(label)
        if not ids:
            continue
        order = rng.permutation(len(ids))
        for pos, idx in enumerate(order):
            folds[pos % n_folds].append(ids[int(idx)])
    return folds


def grid_search(sets: Sequence[DescriptorSet], labels: Sequence[SpeciesLabel],
                scan_ids: Sequence[str], hp: HyperParams, em_opts: EmOptions,
                fv_opts: FisherOptions, aggregate: Callable[[np.ndarray], tuple],
                n_folds: int = 5, seed: int = 0, threads: int = 1) -> GridSearchResult:
    """Mean scan-level validation accuracy per (K, C); ties prefer small K then small C."""
    if not (len(sets) == len(labels) == len(scan_ids)):
        raise DataError("sets/labels/scan_ids must align")
    scan_label: dict[str, SpeciesLabel] = {}
    scan_order: list[str] = []
    for sid, lab in zip(scan_ids, labels):
        if sid not in scan_label:
            scan_label[sid] = lab
            scan_order.append(sid)
        elif scan_label[sid] is not lab:
            raise DataError(f"scan {sid!r} appears with two labels")

    val_folds = stratified_group_folds([(s, scan_label[s]) for s in scan_order], n_folds, seed)
    cells: dict[tuple[int, float], GridCell] = {
        (k, c): GridCell(k=k, c=c, fold_accuracies=[]) for k in hp.k_grid for c in hp.c_grid
    }
    audit = []
    for fold_i, val_scans in enumerate(val_folds):
        val_set = set(val_scans)
        train_scans = [s for s in scan_order if s not in val_set]
        if val_set & set(train_scans):
            raise DataError("internal fold leakage: train and validation scans overlap")
        audit.append({
            "fold": fold_i + 1,
            "train_scans": sorted(train_scans),
            "val_scans": sorted(val_scans),
        })
        train_idx = [i for i, s in enumerate(scan_ids) if s not in val_set]
        val_idx = [i for i, s in enumerate(scan_ids) if s in val_set]
        train_sets = [sets[i] for i in train_idx]
        train_labels = [labels[i] for i in train_idx]
        val_sets = [sets[i] for i in val_idx]
        val_scan_of = [scan_ids[i] for i in val_idx]

        for k in hp.k_grid:
            stage_seed = detrng.derive_seed(seed, 37, fold_i, k)
            pooled = pool_descriptors(train_sets, em_opts.sample_cap, stage_seed)
            whitening = None
            if fv_opts.whiten:
                whitening = fit_whitening(pooled, fv_opts.whiten_dim)
                pooled = whitening.transform(pooled)
            model, _ = em_fit(pooled, EmConfig(
                k=k,
                max_iterations=em_opts.max_iterations,
                tolerance=em_opts.tolerance,
                seed=stage_seed,
                variance_floor_fraction=em_opts.variance_floor_fraction,
            ))
            enc_train = encode_features(model, train_sets, fv_opts.alpha, whitening, threads)
            enc_val = encode_features(model, val_sets, fv_opts.alpha, whitening, threads)
            for c_i, c in enumerate(hp.c_grid):
                svm_model = train_svm_ovr(enc_train, train_labels, c,
                                          detrng.derive_seed(seed, 41, fold_i, k, c_i))
                scores = decision_matrix(svm_model, enc_val)
                correct = 0
                for sid in val_scans:
                    rows = [r for r, s in enumerate(val_scan_of) if s == sid]
                    predicted, _ = aggregate(scores[rows])
                    if predicted is scan_label[sid]:
                        correct += 1
                cells[(k, c)].fold_accuracies.append(correct / len(val_scans))

    ordered = [cells[(k, c)] for k in sorted(hp.k_grid) for c in sorted(hp.c_grid)]
    best: Optional[GridCell] = None
    for cell in ordered:
        if best is None or cell.mean_accuracy > best.mean_accuracy:
            best = cell
    return GridSearchResult(selected_k=best.k, selected_c=best.c, cells=ordered, fold_audit=audit)
