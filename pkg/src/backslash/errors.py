"""Exception hierarchy shared by every backslash module."""


class BackslashError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(BackslashError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateSampleError(DomainError):
    """A sample is too short or all-zero, so moments carry no shape information."""


class RangeError(BackslashError, OverflowError):
    """A value does not fit the integer range of the coder or container."""


class FormatError(BackslashError, ValueError):
    """A file or blob is malformed (bad magic, version, sizes)."""


class TruncationError(FormatError):
    """A bit or byte source ended in the middle of a record."""


class CorruptionError(FormatError):
    """Decoded data is inconsistent with its header, e.g. a rank beyond the table."""


class ShapeError(BackslashError, ValueError):
    """Array dimensions do not agree."""


class DivergenceError(BackslashError, ArithmeticError):
    """Training produced a non-finite or exploding cost."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
