"""Dataset manifests, species vocabulary, and record types.

The manifest is UTF-8, one record per line, whitespace-separated
``key=value`` fields (`scan_id`, `species`, `preparation`, `image_index`,
`path`); lines starting with ``#`` are comments.  Field values therefore
cannot contain whitespace.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DataError, ManifestError


class SpeciesLabel(enum.Enum):
    """Closed 9-code species vocabulary, in fixed classifier order.

    CA Candida albicans, CG Candida glabrata, CT Candida tropicalis,
    CP Candida parapsilosis, CL Candida lusitaniae, SC Saccharomyces
    cerevisiae, SB Saccharomyces boulardii, MF Malassezia furfur,
    CN Cryptococcus neoformans.
    """

    CA = "CA"
    CG = "CG"
    CT = "CT"
    CP = "CP"
    CL = "CL"
    SC = "SC"
    SB = "SB"
    MF = "MF"
    CN = "CN"

    @property
    def index(self) -> int:
        return SPECIES_ORDER.index(self)

    @classmethod
    def parse(cls, code: str) -> "SpeciesLabel":
        try:
            return cls(code)
        except ValueError:
            raise DataError(f"unknown species code {code!r}") from None


SPECIES_ORDER: tuple[SpeciesLabel, ...] = tuple(SpeciesLabel)
NUM_SPECIES = len(SPECIES_ORDER)

_FIELDS = ("scan_id", "species", "preparation", "image_index", "path")


@dataclass(frozen=True)
class ScanRecord:
    """One microscope scan: identity, label, preparation, and file path."""

    scan_id: str
    species: SpeciesLabel
    preparation: int
    image_index: int
    path: str

    def __post_init__(self):
        if not self.scan_id:
            raise DataError("scan_id must be non-empty")
        if self.preparation not in (1, 2):
            raise DataError(f"preparation must be 1 or 2, got {self.preparation}")
        if self.image_index < 0:
            raise DataError(f"image_index must be >= 0, got {self.image_index}")
        if not self.path:
            raise DataError("path must be non-empty")


def _parse_line(line: str) -> ScanRecord:
    fields: dict[str, str] = {}
    for token in line.split():
        if "=" not in token:
            raise DataError(f"malformed token {token!r} (expected key=value)")
        key, value = token.split("=", 1)
        if key not in _FIELDS:
            raise DataError(f"unknown field {key!r}")
        if key in fields:
            raise DataError(f"duplicate field {key!r}")
        fields[key] = value
    missing = [f for f in _FIELDS if f not in fields]
    if missing:
        raise DataError(f"missing fields: {', '.join(missing)}")
    species = SpeciesLabel.parse(fields["species"])
    try:
        preparation = int(fields["preparation"])
    except ValueError:
        raise DataError(f"preparation must be an integer, got {fields['preparation']!r}") from None
    try:
        image_index = int(fields["image_index"])
    except ValueError:
        raise DataError(f"image_index must be an integer, got {fields['image_index']!r}") from None
    return ScanRecord(
        scan_id=fields["scan_id"],
        species=species,
        preparation=preparation,
        image_index=image_index,
        path=fields["path"],
    )


def parse_manifest(text: str) -> list[ScanRecord]:
    """Parse manifest text into records, preserving file order.

    Raises ManifestError listing every offending line (1-based) if any line
    is malformed, a species/preparation value is invalid, or a
    (species, preparation, image_index) triple or scan_id repeats.
    """
    records: list[ScanRecord] = []
    errors: list[tuple[int, str]] = []
    seen_keys: dict[tuple, int] = {}
    seen_ids: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rec = _parse_line(line)
        except DataError as exc:
            errors.append((lineno, str(exc)))
            continue
        key = (rec.species, rec.preparation, rec.image_index)
        if key in seen_keys:
            errors.append((lineno, f"duplicate record {rec.species.value}/p{rec.preparation}/i{rec.image_index} (first at line {seen_keys[key]})"))
            continue
        if rec.scan_id in seen_ids:
            errors.append((lineno, f"duplicate scan_id {rec.scan_id!r} (first at line {seen_ids[rec.scan_id]})"))
            continue
        seen_keys[key] = lineno
        seen_ids[rec.scan_id] = lineno
        records.append(rec)
    if errors:
        raise ManifestError(errors)
    return records


def format_manifest(records: list[ScanRecord]) -> str:
    lines = []
    for r in records:
        lines.append(
            f"scan_id={r.scan_id} species={r.species.value} "
            f"preparation={r.preparation} image_index={r.image_index} path={r.path}"
        )
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class DatasetSummary:
    """Scan counts by species and preparation; totals must partition."""

    per_species: dict[str, int]
    per_preparation: dict[int, int]
    total: int

    def __post_init__(self):
        if sum(self.per_species.values()) != self.total:
            raise DataError("per-species counts do not sum to total")
        if sum(self.per_preparation.values()) != self.total:
            raise DataError("per-preparation counts do not sum to total")


def summarize(records: list[ScanRecord]) -> DatasetSummary:
    per_species = {label.value: 0 for label in SPECIES_ORDER}
    per_preparation = {1: 0, 2: 0}
    for r in records:
        per_species[r.species.value] += 1
        per_preparation[r.preparation] += 1
    return DatasetSummary(per_species, per_preparation, len(records))
