"""Exception types shared across the toolkit."""


class EvoFuseError(Exception):
    """Base class for all toolkit errors."""


class ParseError(EvoFuseError):
    """Malformed file header or field."""


class TruncationError(EvoFuseError):
    """File ended before the declared payload was complete."""


class IoError(EvoFuseError):
    """Filesystem read/write failure."""


class DimensionError(EvoFuseError):
    """Image or kernel dimensions violate an operation's requirements."""


class EmptyInputError(EvoFuseError):
    """An operation that needs at least one element received none."""


class InsufficientDataError(EvoFuseError):
    """Not enough samples to fit a statistical model."""


class UnknownAlgorithmError(EvoFuseError):
    """Requested algorithm id is not registered."""


class NotEvaluatedError(EvoFuseError):
    """Candidate scores required but not yet populated."""


class BankMissError(EvoFuseError):
    """Solution bank has no entry for a pair that training requires."""


class SpecError(EvoFuseError):
    """Architecture description is internally inconsistent."""


class FormatError(EvoFuseError):
    """Binary file magic or layout mismatch."""


class TaskMixError(EvoFuseError):
    """Dataset does not span enough task families."""


class RangeError(EvoFuseError):
    """Numeric argument outside its allowed interval."""
