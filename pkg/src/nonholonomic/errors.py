"""Exception hierarchy shared by every module."""

from __future__ import annotations


class NonholonomicError(Exception):
    """Base class for engine errors."""


class ConfigurationError(NonholonomicError, ValueError):
    """Invalid system construction, dimensions or parameters."""


class InadmissibleStateError(NonholonomicError, ValueError):
    """State is non-finite or lies on the system's declared singular set."""


class SingularityError(NonholonomicError, ArithmeticError):
    """A constraint, embedding or energy function (or a derivative) is not finite."""

    def __init__(self, message: str, index: tuple | None = None):
        if index is not None:
            message = f"{message} at index {index}"
        super().__init__(message)
        self.index = index


class FormulationError(NonholonomicError, ArithmeticError):
    """The assembled acceleration matrix is not positive definite / is singular."""


class NotApplicableError(NonholonomicError):
    """Preconditions of a specialised formula (reducer, integral) are not met."""


class FallbackWarning(UserWarning):
    """A specialised path was requested but its hypotheses fail; the general path was used."""
