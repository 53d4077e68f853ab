"""Writer for the .dfb descriptor container consumed by the bag-of-words
pipeline.

Layout (little-endian): magic ``DFB1`` | version u32 (=1) | D u32 | N u32 |
H' u32 | W' u32 | N*D float32 row-major.  N = H'*W' descriptors in spatial
row-major order, one per feature-map location.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ExtractorError

MAGIC = b"DFB1"
VERSION = 1
_HEADER = struct.Struct("<4s5I")


def write_feature_map(fmap: np.ndarray, destination: str | Path) -> int:
    """Write a (D, H', W') float32 activation as H'*W' descriptors of size D."""
    arr = np.asarray(fmap, dtype=np.float32)
    if arr.ndim != 3:
        raise ExtractorError(f"feature map must be (D, H', W'), got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ExtractorError("feature map contains non-finite values")
    d, h, w = arr.shape
    rows = np.ascontiguousarray(arr.reshape(d, h * w).T)  # spatial row-major
    header = _HEADER.pack(MAGIC, VERSION, d, h * w, h, w)
    payload = rows.tobytes(order="C")
    with open(destination, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    return len(header) + len(payload)
