"""Exception types raised by the model."""


class HfaError(Exception):
    """Base class for every error raised by this package."""


class DomainError(HfaError, ValueError):
    """An input lies outside the domain of a conversion (inf, NaN, log of zero)."""


class ContractViolation(HfaError, ValueError):
    """A datapath precondition was broken, e.g. a positive score difference."""


class TensorFormatError(HfaError, ValueError):
    """A tensor file is malformed or its shape does not fit the request."""
