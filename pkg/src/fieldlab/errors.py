"""Shared exception types."""


class FieldLabError(Exception):
    """Base class for package errors."""


class InvalidConfigError(FieldLabError, ValueError):
    """A configuration value violates its contract."""


class ContractViolationError(FieldLabError, ValueError):
    """An operation was called outside its precondition."""


class DataFormatError(FieldLabError, ValueError):
    """An input file or payload does not match its documented schema."""


class InsufficientSampleError(FieldLabError, ValueError):
    """A statistic was requested on a sample too small for its method."""
