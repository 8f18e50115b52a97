"""Exception hierarchy for the ToT engine.

Every error raised on purpose by this package derives from ToTError so
callers can catch engine failures without swallowing programming errors.
"""


class ToTError(Exception):
    """Base class for all engine errors."""


class ParseError(ToTError):
    """A file or stream is malformed (bad magic, truncation, bad syntax)."""


class ValidationError(ToTError):
    """Parsed data violates a structural invariant."""


class SchemaError(ToTError):
    """A manifest or scenario record does not match the expected schema."""


class VersionMismatch(ToTError):
    """A serialized artifact declares an unsupported format version."""


class UnknownClass(ToTError):
    """A class id is not present in the taxonomy."""


class InvalidBox(ToTError):
    """A bounding box is degenerate or outside its image."""


class UnsupportedImage(ToTError):
    """An image file is not 8-bit RGB."""


class EmptyFeatureMap(ToTError):
    """A feature map has no spatial cells to pool."""


class DimensionMismatch(ToTError):
    """Feature dimensionality disagrees across examples or with a model."""


class AllQuiescent(ToTError):
    """Quiescence filtering removed every row."""


class DegenerateScale(ToTError):
    """Standardization is impossible because the data has zero spread."""


class RankDeficient(ToTError):
    """The reducer cannot be fitted (no rows)."""


class EmptySymbols(ToTError):
    """A symbol vector required to be nonempty is empty."""


class MissingFeature(ToTError):
    """No feature map is available for the third-prediction path."""


class MissingPrecomputed(ToTError):
    """A file backend was queried for a (record, sigma) it does not hold."""


class NonFiniteValue(ToTError):
    """A tensor payload contains NaN or Inf."""


class NoAnswers(ToTError):
    """Accuracy is undefined because every final answer was Null."""


class BackendError(ToTError):
    """An external backend misbehaved; carries the raw reply when available."""

    def __init__(self, message: str, raw: bytes | str | None = None):
        super().__init__(message)
        self.raw = raw


class SpawnError(BackendError):
    """The backend subprocess could not be started."""


class HandshakeError(BackendError):
    """The backend subprocess failed the protocol handshake."""


class BackendTimeout(BackendError):
    """The backend subprocess did not reply within the deadline."""
