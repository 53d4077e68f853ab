"""Descriptor sets and the .dfb binary file format.

Layout (little-endian): magic ``DFB1`` (4 bytes) | version u32 (=1) |
D u32 | N u32 | H' u32 | W' u32 (both 0 when there is no grid) | N*D
float32, row-major (one descriptor per row).  The payload is exactly the
in-memory float32 matrix, so write -> read is bit-exact.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Optional

import numpy as np

from .errors import DescriptorFormatError

MAGIC = b"DFB1"
VERSION = 1
_HEADER = struct.Struct("<4s5I")
HEADER_SIZE = _HEADER.size  # 24 bytes


@dataclass(frozen=True)
class DescriptorSet:
    """N local descriptors of dimension D, float32, optionally on a grid."""

    descriptors: np.ndarray
    grid: Optional[tuple[int, int]] = None
    source_id: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(self.descriptors, dtype=np.float32)
        if arr.ndim != 2:
            raise DescriptorFormatError(f"descriptors must be 2-D, got shape {arr.shape}")
        n, d = arr.shape
        if n < 1 or d < 1:
            raise DescriptorFormatError(f"descriptor matrix must be at least 1x1, got {n}x{d}")
        if not np.isfinite(arr).all():
            raise DescriptorFormatError("descriptors contain non-finite values")
        if self.grid is not None:
            h, w = self.grid
            if h < 1 or w < 1 or h * w != n:
                raise DescriptorFormatError(f"grid {self.grid} inconsistent with N={n}")
            object.__setattr__(self, "grid", (int(h), int(w)))
        object.__setattr__(self, "descriptors", arr)

    @property
    def n(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]


def write_descriptors(dset: DescriptorSet, destination) -> int:
    """Write a descriptor set; returns the byte count. Validates before any write."""
    arr = np.ascontiguousarray(dset.descriptors, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise DescriptorFormatError("descriptors contain non-finite values")
    n, d = arr.shape
    h, w = dset.grid if dset.grid is not None else (0, 0)
    payload = arr.tobytes(order="C")
    header = _HEADER.pack(MAGIC, VERSION, d, n, h, w)
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    else:
        destination.write(header)
        destination.write(payload)
    return len(header) + len(payload)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DescriptorFormatError(f"truncated file: expected {n} more bytes, got {len(data)}")
    return data


def read_descriptors(source, source_id: Optional[str] = None) -> DescriptorSet:
    """Read a .dfb file or stream; exact inverse of write_descriptors."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        if source_id is None:
            source_id = path.stem
        with open(path, "rb") as fh:
            return _read_stream(fh, source_id, total_size=path.stat().st_size)
    return _read_stream(source, source_id or "", total_size=None)


def _read_stream(fh: BinaryIO, source_id: str, total_size: Optional[int]) -> DescriptorSet:
    raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise DescriptorFormatError("truncated header")
    magic, version, d, n, h, w = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DescriptorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise DescriptorFormatError(f"unsupported format version {version}")
    if n < 1 or d < 1:
        raise DescriptorFormatError(f"invalid dimensions N={n}, D={d}")
    expected = n * d * 4
    if total_size is not None and total_size != HEADER_SIZE + expected:
        raise DescriptorFormatError(
            f"payload size mismatch: header declares {expected} bytes, file holds {total_size - HEADER_SIZE}"
        )
    payload = _read_exact(fh, expected)
    arr = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if h == 0 and w == 0:
        grid = None
    elif h > 0 and w > 0:
        if h * w != n:
            raise DescriptorFormatError(f"grid {h}x{w} inconsistent with N={n}")
        grid = (h, w)
    else:
        raise DescriptorFormatError(f"grid fields must be both zero or both positive, got ({h}, {w})")
    return DescriptorSet(descriptors=arr.copy(), grid=grid, source_id=source_id)


def write_matrix(matrix: np.ndarray, destination, source_id: str = "") -> int:
    """Store an arbitrary float matrix (e.g. stacked encodings) as gridless .dfb."""
    return write_descriptors(DescriptorSet(matrix, grid=None, source_id=source_id), destination)


def roundtrip_bytes(dset: DescriptorSet) -> bytes:
    buf = io.BytesIO()
    write_descriptors(dset, buf)
    return buf.getvalue()
