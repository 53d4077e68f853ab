"""Frozen CNN backbones as local-descriptor sources for the bag-of-words pipeline."""

__version__ = "0.1.0"

from .backbones import ARCHITECTURES, BackboneSpec, build_backbone
from .extract import extract_directory, extract_patch

__all__ = [
    "__version__",
    "ARCHITECTURES",
    "BackboneSpec",
    "build_backbone",
    "extract_directory",
    "extract_patch",
]
