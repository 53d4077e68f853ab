"""Run configuration: YAML config file, flag overrides, resolved echo.

Precedence: built-in defaults < config file < command-line flags.  Every
command writes the resolved configuration (with the effective seed and
tool version) into its output directory so runs are reproducible from the
echo alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .baseline import HeadConfig
from .errors import ConfigError
from .patches import FilterBank, PatchSpec

METHODS = ("fv-svm", "baseline-head")
SOURCES = ("builtin", "dfb-directory")
AGGREGATES = ("sum", "vote")


@dataclass(frozen=True)
class EmOptions:
    max_iterations: int = 100
    tolerance: float = 1e-6
    variance_floor_fraction: float = 1e-4
    sample_cap: int = 8192

    def __post_init__(self):
        if self.sample_cap < 1:
            raise ConfigError("em.sample_cap must be >= 1")


@dataclass(frozen=True)
class FisherOptions:
    alpha: float = 0.5
    whiten: bool = False
    whiten_dim: int = 64

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("fisher.alpha must be in (0, 1]")
        if self.whiten_dim < 1:
            raise ConfigError("fisher.whiten_dim must be >= 1")


@dataclass(frozen=True)
class Grids:
    c_values: tuple[float, ...] = (0.01, 0.1, 1.0, 10.0, 100.0)
    k_values: tuple[int, ...] = (16, 32, 64)

    def __post_init__(self):
        if not self.c_values or not self.k_values:
            raise ConfigError("hyperparameter grids must be non-empty")
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))


@dataclass(frozen=True)
class RunConfig:
    manifest: str = ""
    output: str = ""
    seed: Optional[int] = None
    threads: int = 0  # 0 = all available cores
    method: str = "fv-svm"
    source: str = "builtin"
    dfb_dir: Optional[str] = None
    patch_index: Optional[str] = None
    bank: FilterBank = field(default_factory=FilterBank)
    patch_spec: PatchSpec = field(default_factory=PatchSpec)
    em: EmOptions = field(default_factory=EmOptions)
    fisher: FisherOptions = field(default_factory=FisherOptions)
    grids: Grids = field(default_factory=Grids)
    head: HeadConfig = field(default_factory=HeadConfig)
    aggregate: str = "sum"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.source not in SOURCES:
            raise ConfigError(f"descriptor source must be one of {SOURCES}, got {self.source!r}")
        if self.aggregate not in AGGREGATES:
            raise ConfigError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")
        if self.source == "dfb-directory" and not self.dfb_dir:
            raise ConfigError("dfb-directory source requires descriptors.dfb_dir")


_SECTION_TYPES = {
    "bank": (FilterBank, ("seed", "cell", "dim")),
    "patching": (PatchSpec, ("patch_size", "stride", "foreground_threshold")),
    "em": (EmOptions, ("max_iterations", "tolerance", "variance_floor_fraction", "sample_cap")),
    "fisher": (FisherOptions, ("alpha", "whiten", "whiten_dim")),
    "grids": (Grids, ("c_values", "k_values")),
    "baseline": (HeadConfig, ("hidden", "learning_rate", "epochs", "batch_size", "seed", "holdout_fraction")),
}


def _build_section(name: str, raw: Any):
    cls, fields = _SECTION_TYPES[name]
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"invalid config section {name!r}: {exc}") from None


def load_run_config(path: Optional[str | Path] = None, **overrides) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus flag overrides."""
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a mapping at top level")

    known_top = {
        "manifest", "output", "seed", "threads", "method", "aggregate", "descriptors",
        "bank", "patching", "em", "fisher", "grids", "baseline",
    }
    unknown = set(doc) - known_top
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")

    desc = doc.get("descriptors") or {}
    if not isinstance(desc, dict):
        raise ConfigError("config section 'descriptors' must be a mapping")
    unknown = set(desc) - {"source", "dfb_dir", "patch_index", "bank"}
    if unknown:
        raise ConfigError(f"unknown keys in config section 'descriptors': {sorted(unknown)}")

    values: dict[str, Any] = {
        "manifest": doc.get("manifest", ""),
        "output": doc.get("output", ""),
        "seed": doc.get("seed"),
        "threads": doc.get("threads", 0),
        "method": doc.get("method", "fv-svm"),
        "aggregate": doc.get("aggregate", "sum"),
        "source": desc.get("source", "builtin"),
        "dfb_dir": desc.get("dfb_dir"),
        "patch_index": desc.get("patch_index"),
        "bank": _build_section("bank", desc.get("bank", doc.get("bank"))),
        "patch_spec": _build_section("patching", doc.get("patching")),
        "em": _build_section("em", doc.get("em")),
        "fisher": _build_section("fisher", doc.get("fisher")),
        "grids": _build_section("grids", doc.get("grids")),
        "head": _build_section("baseline", doc.get("baseline")),
    }
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def resolved_config_dict(cfg: RunConfig, tool_version: str, extras: Optional[dict] = None) -> dict:
    doc = {
        "tool_version": tool_version,
        "manifest": cfg.manifest,
        "output": cfg.output,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "method": cfg.method,
        "aggregate": cfg.aggregate,
        "descriptors": {
            "source": cfg.source,
            "dfb_dir": cfg.dfb_dir,
            "patch_index": cfg.patch_index,
            "bank": asdict(cfg.bank),
        },
        "patching": asdict(cfg.patch_spec),
        "em": asdict(cfg.em),
        "fisher": asdict(cfg.fisher),
        "grids": {"c_values": list(cfg.grids.c_values), "k_values": list(cfg.grids.k_values)},
        "baseline": asdict(cfg.head),
    }
    if extras:
        doc.update(extras)
    return doc


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, seed=seed)
