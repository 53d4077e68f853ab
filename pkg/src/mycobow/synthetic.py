"""Seeded synthetic scans for desk-scale protocol and accuracy checks.

Each class renders a procedurally distinct blob texture (density, radius,
elongation spaced far apart); preparation 2 applies a mean-preserving
contrast stretch plus a +0.1 brightness offset to the matching
preparation-1 image, so the preparation split is a genuine photometric
domain shift with an exactly known mean-intensity gap.  Images are 16-bit
grayscale PNGs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import detrng
from .data import ScanRecord, SpeciesLabel, format_manifest
from .errors import DataError
from .imaging import save_png, to_uint

PREP2_OFFSET = 0.1
PREP2_CONTRAST = 1.08
BACKGROUND = 0.15
MAX_INTENSITY = 0.8


@dataclass(frozen=True)
class TextureParams:
    blob_count: int
    radius_lo: float
    radius_hi: float
    aspect: float  # major/minor axis ratio
    amplitude: float


# spaced far apart so local statistics separate cleanly
CLASS_TEXTURES: dict[SpeciesLabel, TextureParams] = {
    SpeciesLabel.CA: TextureParams(blob_count=900, radius_lo=3.0, radius_hi=5.0, aspect=1.0, amplitude=0.50),
    SpeciesLabel.CG: TextureParams(blob_count=70, radius_lo=12.0, radius_hi=18.0, aspect=1.0, amplitude=0.45),
    SpeciesLabel.CT: TextureParams(blob_count=260, radius_lo=4.0, radius_hi=6.0, aspect=4.0, amplitude=0.55),
    SpeciesLabel.CP: TextureParams(blob_count=4000, radius_lo=1.3, radius_hi=2.0, aspect=1.0, amplitude=0.60),
}


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 4
    scans_per_class_per_prep: int = 5
    image_size: int = 1024
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.classes <= len(CLASS_TEXTURES):
            raise DataError(f"classes must be in 1..{len(CLASS_TEXTURES)}")
        if self.scans_per_class_per_prep < 1 or self.image_size < 64:
            raise DataError("invalid synthetic dataset spec")


def _stamp_blob(img: np.ndarray, cy: float, cx: float, sig_y: float, sig_x: float,
                angle: float, amplitude: float) -> None:
    reach = 3.0 * max(sig_y, sig_x)
    size = img.shape[0]
    y0, y1 = max(0, int(cy - reach)), min(size, int(cy + reach) + 1)
    x0, x1 = max(0, int(cx - reach)), min(size, int(cx + reach) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dy, dx = yy - cy, xx - cx
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    u = cos_a * dx + sin_a * dy
    v = -sin_a * dx + cos_a * dy
    img[y0:y1, x0:x1] += amplitude * np.exp(-0.5 * ((u / sig_x) ** 2 + (v / sig_y) ** 2))


def render_texture(size: int, params: TextureParams, seed: int) -> np.ndarray:
    """One preparation-1 texture in [0, MAX_INTENSITY]."""
    rng = np.random.default_rng(seed)
    img = np.full((size, size), BACKGROUND, dtype=np.float64)
    count = int(round(params.blob_count * (size / 1024.0) ** 2))
    count = max(8, int(round(count * rng.uniform(0.9, 1.1))))
    for _ in range(count):
        cy, cx = rng.uniform(0, size, size=2)
        radius = rng.uniform(params.radius_lo, params.radius_hi)
        sig_x = radius * params.aspect
        sig_y = radius
        angle = rng.uniform(0, np.pi)
        amp = params.amplitude * rng.uniform(0.7, 1.0)
        _stamp_blob(img, cy, cx, sig_y, sig_x, angle, amp)
    return np.clip(img, 0.0, MAX_INTENSITY)


def prep2_transform(img: np.ndarray) -> np.ndarray:
    """Mean-preserving contrast stretch plus the fixed brightness offset."""
    mean = img.mean()
    return mean + (img - mean) * PREP2_CONTRAST + PREP2_OFFSET


def generate_synthetic_dataset(outdir: str | Path, spec: SyntheticSpec = SyntheticSpec()) -> tuple[Path, list[ScanRecord]]:
    """Write images + manifest; returns (manifest path, records)."""
    out = Path(outdir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    labels = list(CLASS_TEXTURES.keys())[: spec.classes]
    records: list[ScanRecord] = []
    for class_i, label in enumerate(labels):
        params = CLASS_TEXTURES[label]
        for index in range(spec.scans_per_class_per_prep):
            image_seed = detrng.derive_seed(spec.seed, 301, class_i, index)
            base = render_texture(spec.image_size, params, image_seed)
            for prep in (1, 2):
                img = base if prep == 1 else prep2_transform(base)
                scan_id = f"{label.value}_p{prep}_i{index:02d}"
                rel = f"images/{scan_id}.png"
                save_png(out / rel, to_uint(img, 16))
                records.append(ScanRecord(
                    scan_id=scan_id, species=label, preparation=prep,
                    image_index=index, path=rel,
                ))
    manifest_path = out / "manifest.txt"
    manifest_path.write_text(format_manifest(records), encoding="utf-8")
    return manifest_path, records
