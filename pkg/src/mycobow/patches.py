"""Patch-grid extraction and the built-in filter-bank descriptors.

The filter bank is a deterministic stand-in local-descriptor source: the
grayscale patch is tiled into cell x cell blocks, each block is flattened
(row-major), mean-centered, projected by a fixed seeded random matrix and
rectified.  It exists so the full pipeline runs and is testable without an
external CNN feature dump.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import detrng
from .dfb import DescriptorSet
from .errors import DataError


@dataclass(frozen=True)
class PatchSpec:
    """Patch grid geometry and the training-time foreground threshold."""

    patch_size: int = 512
    stride: int = 512
    foreground_threshold: float = 0.02

    def __post_init__(self):
        if self.patch_size < 32:
            raise DataError(f"patch_size must be >= 32, got {self.patch_size}")
        if self.stride < 1:
            raise DataError(f"stride must be >= 1, got {self.stride}")
        if self.foreground_threshold < 0:
            raise DataError("foreground_threshold must be >= 0")


def patch_id(scan_id: str, row: int, col: int) -> str:
    return f"{scan_id}__r{row:05d}_c{col:05d}"


@dataclass(frozen=True)
class Patch:
    """One in-bounds patch: top-left pixel coordinates and [0,1] pixels."""

    scan_id: str
    row: int
    col: int
    pixels: np.ndarray  # (P, P, C) float32 in [0, 1]

    @property
    def id(self) -> str:
        return patch_id(self.scan_id, self.row, self.col)


def grid_shape(height: int, width: int, spec: PatchSpec) -> tuple[int, int]:
    if height < spec.patch_size or width < spec.patch_size:
        raise DataError(
            f"image {height}x{width} smaller than patch_size {spec.patch_size}"
        )
    rows = (height - spec.patch_size) // spec.stride + 1
    cols = (width - spec.patch_size) // spec.stride + 1
    return rows, cols


def extract_patch_grid(image: np.ndarray, spec: PatchSpec, scan_id: str = "") -> list[Patch]:
    """All fully in-bounds patches at multiples of the stride, row-major."""
    if image.ndim == 2:
        image = image[:, :, None]
    h, w = image.shape[:2]
    rows, cols = grid_shape(h, w, spec)
    p = spec.patch_size
    out = []
    for i in range(rows):
        for j in range(cols):
            r, c = i * spec.stride, j * spec.stride
            block = np.asarray(image[r : r + p, c : c + p, :], dtype=np.float32)
            out.append(Patch(scan_id=scan_id, row=r, col=c, pixels=block))
    return out


def grayscale(pixels: np.ndarray) -> np.ndarray:
    """Unweighted channel mean; stain hues vary per preparation."""
    if pixels.ndim == 2:
        return np.asarray(pixels, dtype=np.float64)
    return np.asarray(pixels, dtype=np.float64).mean(axis=2)


def is_foreground(patch: Patch, threshold: float) -> bool:
    """True iff the grayscale intensity standard deviation >= threshold."""
    return bool(np.std(grayscale(patch.pixels)) >= threshold)


@dataclass(frozen=True)
class FilterBank:
    """Seeded random-projection descriptor bank over cell x cell tiles."""

    seed: int = 7
    cell: int = 32
    dim: int = 64

    def __post_init__(self):
        if self.cell < 1 or self.dim < 1:
            raise DataError("cell and dim must be >= 1")

    @cached_property
    def projection(self) -> np.ndarray:
        """(dim, cell^2) matrix, entries from the documented splitmix stream."""
        flat = detrng.standard_normals(self.seed, self.dim * self.cell * self.cell)
        return flat.reshape(self.dim, self.cell * self.cell)


def builtin_descriptors(patch: Patch, bank: FilterBank) -> DescriptorSet:
    """Tile, mean-center, project, rectify; pure in (pixels, seed, cell, dim)."""
    p = patch.pixels.shape[0]
    if p % bank.cell != 0:
        raise DataError(f"patch_size {p} not divisible by cell {bank.cell}")
    g = grayscale(patch.pixels)
    side = p // bank.cell
    blocks = (
        g.reshape(side, bank.cell, side, bank.cell)
        .transpose(0, 2, 1, 3)
        .reshape(side * side, bank.cell * bank.cell)
    )
    blocks = blocks - blocks.mean(axis=1, keepdims=True)
    projected = blocks @ bank.projection.T
    np.maximum(projected, 0.0, out=projected)
    return DescriptorSet(
        descriptors=projected.astype(np.float32),
        grid=(side, side),
        source_id=patch.id,
    )


def scan_id_of_patch(pid: str) -> str:
    """Inverse of patch_id for the scan part."""
    if "__" not in pid:
        raise DataError(f"patch id {pid!r} has no scan prefix")
    return pid.rsplit("__", 1)[0]


def patch_coords(pid: str) -> tuple[int, int]:
    tail = pid.rsplit("__", 1)[1]
    try:
        r_part, c_part = tail.split("_")
        return int(r_part[1:]), int(c_part[1:])
    except (ValueError, IndexError):
        raise DataError(f"patch id {pid!r} has malformed coordinates") from None
