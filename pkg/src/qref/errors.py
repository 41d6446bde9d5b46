"""Exception types raised across the package."""


class QRefError(Exception):
    """Base class for all package errors."""


class DomainError(QRefError, ValueError):
    """A numerical argument is outside the domain of the operation."""


class ContractError(QRefError, ValueError):
    """Arguments violate a structural precondition (shapes, index sets)."""


class DegenerateStateError(QRefError, ValueError):
    """The state has zero norm and cannot be normalized."""


class UnsupportedCaseError(QRefError, NotImplementedError):
    """The operation is not implemented for this kind of input."""


class ResolutionError(QRefError, ValueError):
    """A sampling grid is too coarse for the structure it must resolve."""
