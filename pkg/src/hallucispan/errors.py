"""Exception hierarchy.

Every error carries a short machine-readable ``code`` (the class name) so the
CLI can report it on stderr. Subclasses of :class:`InputError` map to exit
code 1, subclasses of :class:`ExternalError` to exit code 2.
"""


class HalluError(Exception):
    @property
    def code(self) -> str:
        return type(self).__name__


class InputError(HalluError):
    """Bad or inconsistent input data."""


class ExternalError(HalluError):
    """File system, network or fixture-store failure."""


class UnknownLabel(InputError):
    pass


class SchemaError(InputError):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        prefix = f"record {index}: " if index is not None else ""
        super().__init__(prefix + message)


class OffsetError(InputError):
    pass


class MalformedTag(InputError):
    def __init__(self, message: str, raw: str):
        self.raw = raw
        super().__init__(message)


class LowConfidence(InputError):
    def __init__(self, confidence: float, threshold: float):
        self.confidence = confidence
        self.threshold = threshold
        super().__init__(f"alignment confidence {confidence:.3f} below threshold {threshold:.3f}")


class DocMismatch(InputError):
    pass


class CoverageMismatch(InputError):
    pass


class InsufficientData(InputError):
    pass


class EmptyGrid(InputError):
    pass


class SectionMissing(InputError):
    pass


class TemplateMissing(InputError):
    pass


class ConfigError(ExternalError):
    pass


class TransportError(ExternalError):
    pass


class RateLimited(TransportError):
    pass


class FixtureMiss(ExternalError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"no fixture for key {key}")


class UsageError(InputError):
    """Invalid command-line arguments or option combinations."""


class PathError(ExternalError):
    """An input path is missing or unreadable."""
