"""Preparation-split evaluation: outer two-fold protocol with internal
model selection, patch-to-scan aggregation, and accuracy-table reporting.

Fold 1 trains on preparation 1 and tests on preparation 2; fold 2 swaps
them.  Within each outer fold the classifier's hyperparameters come from
an internal scan-grouped 5-fold search on the training side only, after
which the dictionary and classifier are refitted on the whole training
side.  Reported `mean +/- std` is the population standard deviation over
the two outer folds and recomputes exactly from the stored per-fold
values.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import detrng, jsonfmt
from .baseline import HeadConfig, forward, train_baseline_head
from .config import RunConfig
from .data import NUM_SPECIES, SPECIES_ORDER, ScanRecord, SpeciesLabel
from .errors import DataError
from .fisher import fit_whitening
from .gmm import EmConfig, em_fit
from .pipeline import (
    PatchFeature,
    build_source,
    encode_features,
    load_features,
    pool_descriptors,
    pooled_means,
)
from .selection import HyperParams, grid_search
from .svm import decision_matrix, train_svm_ovr


@dataclass(frozen=True)
class FoldPlan:
    """One outer fold: train on one preparation, test on the other."""

    fold_id: int
    train_records: tuple[ScanRecord, ...]
    test_records: tuple[ScanRecord, ...]

    def __post_init__(self):
        train_preps = {r.preparation for r in self.train_records}
        test_preps = {r.preparation for r in self.test_records}
        if len(train_preps) != 1 or len(test_preps) != 1 or train_preps == test_preps:
            raise DataError("outer fold must split the two preparations exactly")
        overlap = {r.scan_id for r in self.train_records} & {r.scan_id for r in self.test_records}
        if overlap:
            raise DataError(f"outer fold leakage: scans {sorted(overlap)} on both sides")


def outer_folds(records: Sequence[ScanRecord]) -> tuple[FoldPlan, FoldPlan]:
    """Preparation split; errors if any species misses a preparation."""
    present: dict[SpeciesLabel, set[int]] = {}
    for r in records:
        present.setdefault(r.species, set()).add(r.preparation)
    missing = [
        f"{label.value} (preparation {prep})"
        for label in sorted(present, key=lambda s: s.index)
        for prep in (1, 2)
        if prep not in present[label]
    ]
    if missing:
        raise DataError(f"species missing a preparation: {', '.join(missing)}")
    prep1 = tuple(r for r in records if r.preparation == 1)
    prep2 = tuple(r for r in records if r.preparation == 2)
    return (
        FoldPlan(fold_id=1, train_records=prep1, test_records=prep2),
        FoldPlan(fold_id=2, train_records=prep2, test_records=prep1),
    )


def aggregate_scan(patch_scores: np.ndarray, mode: str = "sum") -> tuple[SpeciesLabel, np.ndarray]:
    """Combine patch score vectors into one scan prediction.

    `sum` adds the decision vectors; `vote` counts patch argmaxes.  Ties go
    to the lowest class index.
    """
    scores = np.asarray(patch_scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] < 1 or scores.shape[1] != NUM_SPECIES:
        raise DataError(f"patch scores must be (P, {NUM_SPECIES}) with P >= 1, got {scores.shape}")
    if mode == "sum":
        combined = scores.sum(axis=0)
    elif mode == "vote":
        combined = np.zeros(NUM_SPECIES)
        for row in scores:
            combined[int(np.argmax(row))] += 1.0
    else:
        raise DataError(f"unknown aggregation mode {mode!r}")
    return SPECIES_ORDER[int(np.argmax(combined))], combined


def accuracy(predictions: Sequence[SpeciesLabel], truths: Sequence[SpeciesLabel]) -> float:
    if len(predictions) != len(truths) or not predictions:
        raise DataError("predictions and truths must be equal-length and non-empty")
    hits = sum(1 for p, t in zip(predictions, truths) if p is t)
    return hits / len(predictions)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Plain-float mean and population standard deviation (documented so the
    report can be recomputed bit-for-bit from the stored per-fold values)."""
    n = len(values)
    mean = sum(values) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in values) / n)
    return mean, std


def confusion_matrix(predictions: Sequence[SpeciesLabel], truths: Sequence[SpeciesLabel]) -> np.ndarray:
    mat = np.zeros((NUM_SPECIES, NUM_SPECIES), dtype=np.int64)
    for p, t in zip(predictions, truths):
        mat[t.index, p.index] += 1
    return mat


@dataclass
class FoldResult:
    fold_id: int
    train_preparation: int
    test_preparation: int
    patch_accuracy: float
    scan_accuracy: float
    selected_k: Optional[int]
    selected_c: Optional[float]
    grid_cells: list[dict]
    internal_folds: list[dict]
    confusion_patch: np.ndarray
    confusion_scan: np.ndarray
    n_train_patches: int
    n_test_patches: int


@dataclass
class ExperimentReport:
    method: str
    seed: int
    aggregate: str
    folds: list[FoldResult]
    patch_mean: float
    patch_std: float
    scan_mean: float
    scan_std: float
    tool_version: str
    timing: dict = field(default_factory=dict)


def _check_disjoint(train_ids: set[str], test_ids: set[str], stage: str) -> None:
    shared = train_ids & test_ids
    if shared:
        raise DataError(f"{stage} leakage: scans {sorted(shared)} appear on both sides")


def _fit_and_score_fv(train_feats, test_feats, cfg: RunConfig, seed: int, threads: int):
    """Grid search, refit on the full training side, score the test side."""
    train_sets = [f.dset for f in train_feats]
    train_labels = [f.label for f in train_feats]
    train_scans = [f.scan_id for f in train_feats]

    result = grid_search(
        train_sets, train_labels, train_scans,
        HyperParams.from_grids(cfg.grids), cfg.em, cfg.fisher,
        aggregate=lambda s: aggregate_scan(s, cfg.aggregate),
        n_folds=5, seed=detrng.derive_seed(seed, 53), threads=threads,
    )
    stage_seed = detrng.derive_seed(seed, 59, result.selected_k)
    pooled = pool_descriptors(train_sets, cfg.em.sample_cap, stage_seed)
    whitening = None
    if cfg.fisher.whiten:
        whitening = fit_whitening(pooled, cfg.fisher.whiten_dim)
        pooled = whitening.transform(pooled)
    model, _ = em_fit(pooled, EmConfig(
        k=result.selected_k,
        max_iterations=cfg.em.max_iterations,
        tolerance=cfg.em.tolerance,
        seed=stage_seed,
        variance_floor_fraction=cfg.em.variance_floor_fraction,
    ))
    enc_train = encode_features(model, train_sets, cfg.fisher.alpha, whitening, threads)
    svm_model = train_svm_ovr(enc_train, train_labels, result.selected_c,
                              detrng.derive_seed(seed, 61, result.selected_k))
    enc_test = encode_features(model, [f.dset for f in test_feats], cfg.fisher.alpha,
                               whitening, threads)
    scores = decision_matrix(svm_model, enc_test)
    extras = {
        "selected_k": result.selected_k,
        "selected_c": result.selected_c,
        "grid_cells": [
            {"k": cell.k, "c": cell.c, "fold_accuracies": cell.fold_accuracies,
             "mean_accuracy": cell.mean_accuracy}
            for cell in result.cells
        ],
        "internal_folds": result.fold_audit,
    }
    return scores, extras


def _fit_and_score_baseline(train_feats, test_feats, cfg: RunConfig, seed: int):
    pooled_train = pooled_means([f.dset for f in train_feats])
    head_cfg = HeadConfig(
        hidden=cfg.head.hidden,
        learning_rate=cfg.head.learning_rate,
        epochs=cfg.head.epochs,
        batch_size=cfg.head.batch_size,
        seed=detrng.derive_seed(seed, 67),
        holdout_fraction=cfg.head.holdout_fraction,
    )
    head = train_baseline_head(pooled_train, [f.label for f in train_feats], head_cfg)
    probs = forward(head, pooled_means([f.dset for f in test_feats]))
    return probs, {"selected_k": None, "selected_c": None, "grid_cells": [], "internal_folds": []}


@dataclass(frozen=True)
class _LabeledFeature:
    patch_id: str
    dset: object
    scan_id: str
    label: SpeciesLabel


def _flatten(features_by_scan: dict[str, list[PatchFeature]], records: Sequence[ScanRecord],
             train_filter: bool) -> list[_LabeledFeature]:
    out = []
    for rec in records:
        feats = features_by_scan[rec.scan_id]
        kept = [f for f in feats if f.foreground] if train_filter else feats
        if train_filter and not kept:
            kept = feats  # never drop a whole scan from training
        for f in kept:
            out.append(_LabeledFeature(f.patch_id, f.dset, rec.scan_id, rec.species))
    return out


def run_experiment(records: Sequence[ScanRecord], cfg: RunConfig, seed: int,
                   threads: int = 1, manifest_dir: Optional[Path] = None) -> ExperimentReport:
    """Full two-fold protocol; deterministic given (records, cfg, seed)."""
    t_start = time.monotonic()
    source = build_source(cfg, manifest_dir or Path("."))
    plans = outer_folds(records)
    features = load_features(source, records, threads)

    fold_results: list[FoldResult] = []
    timing: dict[str, float] = {}
    for plan in plans:
        t_fold = time.monotonic()
        _check_disjoint({r.scan_id for r in plan.train_records},
                        {r.scan_id for r in plan.test_records}, f"outer fold {plan.fold_id}")
        train_feats = _flatten(features, plan.train_records, train_filter=True)
        test_feats = _flatten(features, plan.test_records, train_filter=False)
        fold_seed = detrng.derive_seed(seed, 71, plan.fold_id)

        if cfg.method == "fv-svm":
            scores, extras = _fit_and_score_fv(train_feats, test_feats, cfg, fold_seed, threads)
        else:
            scores, extras = _fit_and_score_baseline(train_feats, test_feats, cfg, fold_seed)

        for internal in extras["internal_folds"]:
            _check_disjoint(set(internal["train_scans"]), set(internal["val_scans"]),
                            f"outer fold {plan.fold_id} internal fold {internal['fold']}")
            _check_disjoint(set(internal["train_scans"]) | set(internal["val_scans"]),
                            {r.scan_id for r in plan.test_records},
                            f"outer fold {plan.fold_id} internal/test")

        patch_truth = [f.label for f in test_feats]
        patch_pred = [SPECIES_ORDER[int(i)] for i in np.argmax(scores, axis=1)]
        patch_acc = accuracy(patch_pred, patch_truth)

        scan_pred, scan_truth = [], []
        for rec in plan.test_records:
            rows = [i for i, f in enumerate(test_feats) if f.scan_id == rec.scan_id]
            predicted, _ = aggregate_scan(scores[rows], cfg.aggregate)
            scan_pred.append(predicted)
            scan_truth.append(rec.species)
        scan_acc = accuracy(scan_pred, scan_truth)

        fold_results.append(FoldResult(
            fold_id=plan.fold_id,
            train_preparation=plan.train_records[0].preparation,
            test_preparation=plan.test_records[0].preparation,
            patch_accuracy=patch_acc,
            scan_accuracy=scan_acc,
            selected_k=extras["selected_k"],
            selected_c=extras["selected_c"],
            grid_cells=extras["grid_cells"],
            internal_folds=extras["internal_folds"],
            confusion_patch=confusion_matrix(patch_pred, patch_truth),
            confusion_scan=confusion_matrix(scan_pred, scan_truth),
            n_train_patches=len(train_feats),
            n_test_patches=len(test_feats),
        ))
        timing[f"fold{plan.fold_id}_seconds"] = time.monotonic() - t_fold

    patch_mean, patch_std = mean_std([f.patch_accuracy for f in fold_results])
    scan_mean, scan_std = mean_std([f.scan_accuracy for f in fold_results])
    timing["total_seconds"] = time.monotonic() - t_start

    from . import __version__

    return ExperimentReport(
        method=cfg.method,
        seed=seed,
        aggregate=cfg.aggregate,
        folds=fold_results,
        patch_mean=patch_mean,
        patch_std=patch_std,
        scan_mean=scan_mean,
        scan_std=scan_std,
        tool_version=__version__,
        timing=timing,
    )


def format_pct(mean: float, std: float) -> str:
    """One-decimal percent pair, e.g. '93.9 ± 3.9'."""
    return f"{mean * 100.0:.1f} ± {std * 100.0:.1f}"


_METHOD_LABELS = {"fv-svm": "bag-of-words (FV + linear SVM)", "baseline-head": "baseline softmax head"}


def render_report_table(report: ExperimentReport) -> str:
    """Aligned accuracy table plus per-fold detail; no timing fields."""
    rows = [
        ("Method", "Patch-based", "Scan-based"),
        (
            _METHOD_LABELS.get(report.method, report.method),
            format_pct(report.patch_mean, report.patch_std),
            format_pct(report.scan_mean, report.scan_std),
        ),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = []
    for r in rows:
        lines.append(f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}")
        if r is rows[0]:
            lines.append("-" * (sum(widths) + 4))
    lines.append("")
    for fold in report.folds:
        sel = ""
        if fold.selected_k is not None:
            sel = f"  selected K={fold.selected_k} C={fold.selected_c:g}"
        lines.append(
            f"fold {fold.fold_id} (train prep {fold.train_preparation}, test prep {fold.test_preparation}): "
            f"patch {fold.patch_accuracy * 100.0:.1f}  scan {fold.scan_accuracy * 100.0:.1f}{sel}"
        )
    lines.append("")
    lines.append(f"seed {report.seed}  method {report.method}  aggregate {report.aggregate}")
    return "\n".join(lines) + "\n"


def report_document(report: ExperimentReport) -> dict:
    """Deterministic report body (no timing)."""
    return {
        "kind": "experiment-report",
        "tool_version": report.tool_version,
        "method": report.method,
        "seed": report.seed,
        "aggregate": report.aggregate,
        "patch_accuracy": {
            "per_fold": [f.patch_accuracy for f in report.folds],
            "mean": report.patch_mean,
            "std": report.patch_std,
        },
        "scan_accuracy": {
            "per_fold": [f.scan_accuracy for f in report.folds],
            "mean": report.scan_mean,
            "std": report.scan_std,
        },
        "folds": [
            {
                "fold_id": f.fold_id,
                "train_preparation": f.train_preparation,
                "test_preparation": f.test_preparation,
                "patch_accuracy": f.patch_accuracy,
                "scan_accuracy": f.scan_accuracy,
                "selected_k": f.selected_k,
                "selected_c": f.selected_c,
                "grid_cells": f.grid_cells,
                "internal_folds": f.internal_folds,
                "n_train_patches": f.n_train_patches,
                "n_test_patches": f.n_test_patches,
                "confusion_patch": f.confusion_patch,
                "confusion_scan": f.confusion_scan,
            }
            for f in report.folds
        ],
    }


def _write_confusion_csv(matrix: np.ndarray, path: Path) -> None:
    codes = [s.value for s in SPECIES_ORDER]
    lines = ["true\\pred," + ",".join(codes)]
    for i, code in enumerate(codes):
        lines.append(code + "," + ",".join(str(int(v)) for v in matrix[i]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_report(report: ExperimentReport, outdir: str | Path) -> None:
    """report.json + report.txt are timing-free; wall clocks go to timing.json."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    jsonfmt.dump(report_document(report), out / "report.json")
    (out / "report.txt").write_text(render_report_table(report), encoding="utf-8")
    jsonfmt.dump({"kind": "timing", **report.timing}, out / "timing.json")
    for fold in report.folds:
        _write_confusion_csv(fold.confusion_patch, out / f"confusion_patch_fold{fold.fold_id}.csv")
        _write_confusion_csv(fold.confusion_scan, out / f"confusion_scan_fold{fold.fold_id}.csv")
