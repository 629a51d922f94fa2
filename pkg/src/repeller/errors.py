"""Exception hierarchy shared by all modules."""


class RepellerError(Exception):
    """Base class for every error raised by this package."""


class XRangeError(RepellerError, OverflowError):
    """Binary exponent left the supported range of +-2**62."""


class XDomainError(RepellerError, ValueError):
    """Argument outside the domain of an operation (log of zero, NaN significand, ...)."""


class ConstructionError(RepellerError):
    """The scale sequence violates one of its structural invariants."""


class PoleError(RepellerError, ZeroDivisionError):
    """Logarithmic derivative requested at (or numerically at) a zero of f."""


class NumericalFailure(RepellerError):
    """An iterative or adaptive procedure did not reach its tolerance."""


class GeometryError(RepellerError):
    """A zero of f - a persists on a region boundary after jittering."""


class BudgetError(RepellerError):
    """A preimage tree would exceed the configured node budget."""


class PartialTreeError(RepellerError):
    """A dimension estimate was requested from an incomplete preimage tree."""


class BracketError(RepellerError):
    """The pressure does not change sign over the requested t-range."""
