"""Exception hierarchy shared by all modules.

Every error raised on purpose derives from DomainRagError so callers can
catch the library's failures without swallowing genuine bugs.
"""


class DomainRagError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DomainRagError):
    """Vector lengths, matrix shapes, or image dimensions do not agree."""


class DegenerateVectorError(DomainRagError):
    """A zero-norm vector where a direction is required (upstream failure)."""


class EmptyInputError(DomainRagError):
    """An operation received an empty collection it cannot act on."""


class ValidationError(DomainRagError):
    """Structured input violates its declared invariants."""


class DuplicateIdError(ValidationError):
    """An identifier that must be unique was seen twice."""


class StageError(DomainRagError):
    """A retrieval result was passed to a stage it has not reached."""


class IoError(DomainRagError):
    """Reading or writing a file failed at the OS level."""


class FormatError(DomainRagError):
    """A file exists but its contents do not parse as the expected format."""


class GeometryError(DomainRagError):
    """Boxes, masks, or resample plans that do not fit their image."""


class BackendUnavailable(DomainRagError):
    """A model backend stayed unreachable after all retries."""


class ProtocolViolation(DomainRagError):
    """A backend reply (or our request) broke the wire contract."""


class InsufficientDataError(DomainRagError):
    """The dataset cannot satisfy the requested episode specification."""


class AccountingError(DomainRagError):
    """Generated-sample counts do not match the expansion contract."""


class InsufficientSamplesError(DomainRagError):
    """Too few samples to fit distribution statistics (needs at least 2)."""


class NumericalError(DomainRagError):
    """A numeric routine left its domain (e.g. genuinely negative eigenvalue)."""


class ConfigError(ValidationError):
    """A configuration file or override is malformed or names unknown keys."""


class PipelineError(DomainRagError):
    """A pipeline stage failed; message names the stage and support id."""

    def __init__(self, stage: str, support_id, cause: Exception):
        super().__init__(f"stage '{stage}' failed for support {support_id!r}: {cause}")
        self.stage = stage
        self.support_id = support_id
        self.cause = cause
