class ExtractorError(Exception):
    """Base class for extraction failures."""


class WeightsError(ExtractorError):
    """Pretrained weights could not be obtained."""


class PatchError(ExtractorError):
    """A patch file is unreadable or inconsistent with the batch."""


class DimensionError(ExtractorError):
    """Emitted descriptor dimension disagrees with the architecture spec."""
