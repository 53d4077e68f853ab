"""Deep bag-of-visual-words pipeline for microscopic fungal scan classification."""

__version__ = "0.1.0"

from .data import DatasetSummary, ScanRecord, SpeciesLabel, parse_manifest, summarize
from .dfb import DescriptorSet, read_descriptors, write_descriptors
from .fisher import FisherVector, encode, fv_dimension, normalize
from .gmm import EmConfig, FitTrace, GmmModel, em_fit, kmeanspp_init, log_likelihood, responsibilities
from .patches import FilterBank, Patch, PatchSpec, builtin_descriptors, extract_patch_grid, is_foreground
from .svm import SvmModel, decision_scores, train_svm_ovr

__all__ = [
    "__version__",
    "DatasetSummary",
    "DescriptorSet",
    "EmConfig",
    "FilterBank",
    "FisherVector",
    "FitTrace",
    "GmmModel",
    "Patch",
    "PatchSpec",
    "ScanRecord",
    "SpeciesLabel",
    "SvmModel",
    "builtin_descriptors",
    "decision_scores",
    "em_fit",
    "encode",
    "extract_patch_grid",
    "fv_dimension",
    "is_foreground",
    "kmeanspp_init",
    "log_likelihood",
    "normalize",
    "parse_manifest",
    "read_descriptors",
    "responsibilities",
    "summarize",
    "train_svm_ovr",
    "write_descriptors",
]
