"""Batch extraction: patch PNGs in, one .dfb per patch out."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
import torch

from .backbones import TappedBackbone
from .dfbout import write_feature_map
from .errors import DimensionError, PatchError


def load_patch(path: str | Path) -> np.ndarray:
    """Read an 8/16-bit grayscale or RGB patch as (H, W, 3) float32 in [0, 1].

    16-bit intensities are rescaled into the same unit range the pretrained
    normalization constants expect.
    """
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED | cv2.IMREAD_ANYDEPTH | cv2.IMREAD_ANYCOLOR)
    if img is None:
        raise PatchError(f"cannot read patch {path}")
    if img.dtype == np.uint8:
        out = img.astype(np.float32) / 255.0
    elif img.dtype == np.uint16:
        out = img.astype(np.float32) / 65535.0
    else:
        raise PatchError(f"unsupported patch dtype {img.dtype} in {path}")
    if out.ndim == 2:
        out = np.repeat(out[:, :, None], 3, axis=2)
    elif out.shape[2] == 3:
        out = cv2.cvtColor(out, cv2.COLOR_BGR2RGB)
    elif out.shape[2] == 4:
        out = cv2.cvtColor(out, cv2.COLOR_BGRA2RGB)
    else:
        raise PatchError(f"unsupported channel layout {out.shape} in {path}")
    return out


def preprocess(patch: np.ndarray, backbone: TappedBackbone, resize: str) -> torch.Tensor:
    """Normalize (and optionally resize to the canonical input side)."""
    spec = backbone.spec
    if resize == "canonical":
        side = spec.canonical_input
        patch = cv2.resize(patch, (side, side), interpolation=cv2.INTER_AREA)
    elif resize != "native":
        raise PatchError(f"resize must be 'native' or 'canonical', got {resize!r}")
    h, w = patch.shape[:2]
    if min(h, w) < spec.min_input:
        raise PatchError(
            f"patch {h}x{w} below {spec.architecture}'s minimum input {spec.min_input}; "
            "use --resize canonical"
        )
    tensor = torch.from_numpy(np.ascontiguousarray(patch.transpose(2, 0, 1)))
    mean = torch.tensor(spec.mean).view(3, 1, 1)
    std = torch.tensor(spec.std).view(3, 1, 1)
    return (tensor - mean) / std


def extract_patch(backbone: TappedBackbone, patch_path: str | Path, out_path: str | Path,
                  resize: str = "native") -> tuple[int, int, int]:
    """Extract one patch; returns the emitted (D, H', W')."""
    tensor = preprocess(load_patch(patch_path), backbone, resize)
    fmap = backbone.feature_maps(tensor[None])[0].numpy()
    _check_dim(backbone, fmap.shape[0])
    write_feature_map(fmap, out_path)
    return fmap.shape


def _check_dim(backbone: TappedBackbone, emitted: int) -> None:
    expected = backbone.spec.descriptor_dim
    if emitted != expected:
        raise DimensionError(
            f"{backbone.spec.architecture} emitted D={emitted}, expected {expected}"
        )


def extract_directory(backbone: TappedBackbone, patches_dir: str | Path, out_dir: str | Path,
                      batch_size: int = 8, resize: str = "native") -> list[Path]:
    """Extract every `*.png` in `patches_dir`; one `<stem>.dfb` per patch."""
    patches = sorted(Path(patches_dir).glob("*.png"))
    if not patches:
        raise PatchError(f"no .png patches found in {patches_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for start in range(0, len(patches), max(1, batch_size)):
        chunk = patches[start : start + max(1, batch_size)]
        tensors = [preprocess(load_patch(p), backbone, resize) for p in chunk]
        shapes = {tuple(t.shape) for t in tensors}
        if len(shapes) != 1:
            raise PatchError(
                f"mixed patch sizes in one run: {sorted(shapes)}; extract them separately"
            )
        fmaps = backbone.feature_maps(torch.stack(tensors)).numpy()
        _check_dim(backbone, fmaps.shape[1])
        for path, fmap in zip(chunk, fmaps):
            target = out / f"{path.stem}.dfb"
            write_feature_map(fmap, target)
            written.append(target)
    return written
