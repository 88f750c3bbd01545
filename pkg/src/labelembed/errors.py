"""Exception hierarchy shared by every module."""


class LabelEmbedError(Exception):
    """Base class for all errors raised by labelembed."""


class DimensionError(LabelEmbedError, ValueError):
    """Shapes or dimensions are invalid or do not agree."""


class DomainError(LabelEmbedError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class NonFiniteError(LabelEmbedError, ValueError):
    """Input contains NaN or infinite values."""


class DataError(LabelEmbedError, ValueError):
    """Malformed dataset content (parse errors, bad indices, bad labels)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line


class LabelRangeError(DataError):
    """A label falls outside {1..C}."""

    def __init__(self, message, row=None):
        if row is not None:
            message = "row %d: %s" % (row, message)
        super().__init__(message)
        self.row = row


class SparsityError(LabelEmbedError, ValueError):
    """A label vector has more than K active entries."""


class BudgetExceededError(LabelEmbedError, RuntimeError):
    """Exhaustive enumeration would exceed the configured budget."""


class JLPViolationError(LabelEmbedError, RuntimeError):
    """The embedding matrix fails the Johnson-Lindenstrauss check a bound needs."""


class ConditionViolatedError(LabelEmbedError, RuntimeError):
    """A distributional precondition (e.g. the noise margin) does not hold."""


class ArtifactError(LabelEmbedError, IOError):
    """A persisted matrix or model file is corrupt, truncated or incompatible."""
