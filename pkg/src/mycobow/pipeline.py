"""Descriptor sources, pooling, and parallel encoding.

Two descriptor sources feed the pipeline: the built-in filter bank
(computed from patch pixels) and a directory of pre-extracted .dfb files
named `<patch_id>.dfb`.  Parallel maps preserve item order, so results are
identical for any thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import detrng
from .config import RunConfig
from .data import ScanRecord
from .dfb import DescriptorSet, read_descriptors
from .errors import DataError
from .fisher import WhiteningTransform, encode_normalized
from .gmm import GmmModel
from .imaging import load_image, normalize_intensity
from .patches import (
    FilterBank,
    Patch,
    PatchSpec,
    builtin_descriptors,
    extract_patch_grid,
    is_foreground,
    scan_id_of_patch,
)


@dataclass(frozen=True)
class PatchFeature:
    """One patch's descriptors plus its training-time foreground flag."""

    patch_id: str
    dset: DescriptorSet
    foreground: bool


def parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map; results do not depend on the thread count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


class BuiltinSource:
    """Patch pixels -> filter-bank descriptors, straight from the scans."""

    def __init__(self, base_dir: Path, spec: PatchSpec, bank: FilterBank):
        self.base_dir = Path(base_dir)
        self.spec = spec
        self.bank = bank

    def patches_for(self, record: ScanRecord) -> list[PatchFeature]:
        image = normalize_intensity(load_image(self.base_dir / record.path))
        patches = extract_patch_grid(image, self.spec, scan_id=record.scan_id)
        out = []
        for p in patches:
            fg = is_foreground(p, self.spec.foreground_threshold)
            out.append(PatchFeature(p.id, builtin_descriptors(p, self.bank), fg))
        return out

    def pixel_patches_for(self, record: ScanRecord) -> list[Patch]:
        image = normalize_intensity(load_image(self.base_dir / record.path))
        return extract_patch_grid(image, self.spec, scan_id=record.scan_id)


class DfbDirectorySource:
    """Pre-extracted .dfb files, one per patch, named `<patch_id>.dfb`."""

    def __init__(self, directory: Path, foreground_flags: Optional[dict[str, bool]] = None):
        self.directory = Path(directory)
        self.foreground_flags = foreground_flags
        self._by_scan: dict[str, list[Path]] = {}
        for path in sorted(self.directory.glob("*.dfb")):
            self._by_scan.setdefault(scan_id_of_patch(path.stem), []).append(path)
        if not self._by_scan:
            raise DataError(f"no .dfb files found in {self.directory}")

    def patches_for(self, record: ScanRecord) -> list[PatchFeature]:
        paths = self._by_scan.get(record.scan_id)
        if not paths:
            raise DataError(f"no descriptor files for scan {record.scan_id!r} in {self.directory}")
        out = []
        for path in paths:
            dset = read_descriptors(path)
            fg = True
            if self.foreground_flags is not None:
                fg = self.foreground_flags.get(path.stem, True)
            out.append(PatchFeature(path.stem, dset, fg))
        return out


def read_patch_index(path: Path) -> dict[str, bool]:
    """Parse a patch index (written by extract-patches) into foreground flags."""
    flags: dict[str, bool] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 5:
            raise DataError(f"patch index {path} line {lineno}: expected 5 tab-separated fields")
        flags[parts[0]] = parts[4] == "1"
    return flags


def build_source(cfg: RunConfig, manifest_dir: Path):
    if cfg.source == "builtin":
        return BuiltinSource(manifest_dir, cfg.patch_spec, cfg.bank)
    flags = read_patch_index(Path(cfg.patch_index)) if cfg.patch_index else None
    return DfbDirectorySource(Path(cfg.dfb_dir), flags)


def load_features(source, records: Iterable[ScanRecord], threads: int) -> dict[str, list[PatchFeature]]:
    """Per-scan patch features, keyed by scan_id, in record order."""
    records = list(records)
    results = parallel_map(source.patches_for, records, threads)
    return {rec.scan_id: feats for rec, feats in zip(records, results)}


def pool_descriptors(sets: Sequence[DescriptorSet], cap: int, seed: int) -> np.ndarray:
    """Stack descriptor rows (float64); subsample to `cap` rows, seeded."""
    if not sets:
        raise DataError("no descriptor sets to pool")
    stacked = np.concatenate([np.asarray(s.descriptors, dtype=np.float64) for s in sets], axis=0)
    if stacked.shape[0] > cap:
        rng = np.random.default_rng(detrng.derive_seed(seed, 23))
        idx = np.sort(rng.choice(stacked.shape[0], size=cap, replace=False))
        stacked = stacked[idx]
    return stacked


def encode_features(model: GmmModel, sets: Sequence[DescriptorSet], alpha: float,
                    whitening: Optional[WhiteningTransform], threads: int) -> np.ndarray:
    """(M, 2KD) matrix of normalized Fisher vectors, one row per set."""

    def one(dset: DescriptorSet) -> np.ndarray:
        if whitening is not None:
            dset = whitening.transform_set(dset)
        return encode_normalized(model, dset, alpha).values

    rows = parallel_map(one, list(sets), threads)
    return np.vstack(rows)


def pooled_means(sets: Sequence[DescriptorSet]) -> np.ndarray:
    """(M, D) per-patch mean descriptor (baseline head input)."""
    return np.vstack([np.asarray(s.descriptors, dtype=np.float64).mean(axis=0) for s in sets])
