"""Exception hierarchy shared across the pipeline.

The CLI maps these to exit codes: ConfigError -> 1 (usage),
DataError -> 2 (bad inputs), NumericalError -> 3 (numerical failure).
"""


class MycobowError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(MycobowError):
    """Invalid configuration or command usage."""


class DataError(MycobowError):
    """Malformed or inconsistent input data."""


class ManifestError(DataError):
    """Manifest parsing failed; carries per-line error locations."""

    def __init__(self, errors: list[tuple[int, str]]):
        self.errors = list(errors)
        lines = "; ".join(f"line {n}: {msg}" for n, msg in self.errors)
        super().__init__(f"invalid manifest ({lines})")


class DescriptorFormatError(DataError):
    """Descriptor (.dfb) file is malformed."""


class ImageError(DataError):
    """Image file is unreadable or has an unsupported layout."""


class NumericalError(MycobowError):
    """A numerical procedure failed beyond its stated limits."""
