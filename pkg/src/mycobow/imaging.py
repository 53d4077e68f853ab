"""Image I/O: 8/16-bit grayscale and RGB PNG/TIFF via OpenCV.

Arrays are (H, W, C) in RGB channel order; intensities keep their native
integer dtype until normalized to [0, 1] float (i/255 for 8-bit, i/65535
for 16-bit).
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .errors import ImageError


def load_image(path: str | Path) -> np.ndarray:
    """Load an image as (H, W, C) uint8 or uint16, RGB order."""
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED | cv2.IMREAD_ANYDEPTH | cv2.IMREAD_ANYCOLOR)
    if img is None:
        raise ImageError(f"cannot read image {path}")
    if img.dtype not in (np.uint8, np.uint16):
        raise ImageError(f"unsupported image dtype {img.dtype} in {path}")
    if img.ndim == 2:
        img = img[:, :, None]
    elif img.ndim == 3 and img.shape[2] == 3:
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    elif img.ndim == 3 and img.shape[2] == 4:
        img = cv2.cvtColor(img, cv2.COLOR_BGRA2RGB)
    else:
        raise ImageError(f"unsupported channel layout {img.shape} in {path}")
    return img


def normalize_intensity(img: np.ndarray) -> np.ndarray:
    """Map integer intensities to float32 in [0, 1] by bit depth."""
    if img.dtype == np.uint8:
        return img.astype(np.float32) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float32) / 65535.0
    if np.issubdtype(img.dtype, np.floating):
        return img.astype(np.float32)
    raise ImageError(f"unsupported dtype {img.dtype}")


def save_png(path: str | Path, array: np.ndarray) -> None:
    """Write uint8/uint16 (H, W) or (H, W, C) RGB array as PNG."""
    if array.dtype not in (np.uint8, np.uint16):
        raise ImageError(f"PNG export needs uint8/uint16, got {array.dtype}")
    out = array
    if out.ndim == 3 and out.shape[2] == 1:
        out = out[:, :, 0]
    elif out.ndim == 3 and out.shape[2] == 3:
        out = cv2.cvtColor(out, cv2.COLOR_RGB2BGR)
    elif out.ndim != 2:
        raise ImageError(f"unsupported shape {array.shape} for PNG export")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), out):
        raise ImageError(f"failed to write {path}")


def to_uint(array01: np.ndarray, bit_depth: int) -> np.ndarray:
    """Quantize a [0, 1] float array back to 8- or 16-bit integers."""
    if bit_depth == 8:
        return np.clip(np.rint(array01 * 255.0), 0, 255).astype(np.uint8)
    if bit_depth == 16:
        return np.clip(np.rint(array01 * 65535.0), 0, 65535).astype(np.uint16)
    raise ImageError(f"unsupported bit depth {bit_depth}")
