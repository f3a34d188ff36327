"""Exception hierarchy. Everything raised on purpose derives from OnsdError
so the CLI can map it to a clean exit code."""


class OnsdError(Exception):
    """Base class for all errors raised by this package."""


class SpecError(OnsdError):
    """A phantom spec violates one of its invariants."""


class DataError(OnsdError):
    """A dataset manifest or image file is missing or malformed."""


class DetectionParseError(OnsdError):
    """A detection text file could not be parsed."""


class GeometryError(OnsdError):
    """A measurement construction is degenerate."""


class MaskError(OnsdError):
    """A mask file has the wrong shape or cannot be read."""


class LcaError(OnsdError):
    """Invalid sparse-coding input or a corrupt model artifact."""


class EvalError(OnsdError):
    """The evaluation protocol cannot be applied to the given data."""
