"""Exception hierarchy shared by all fhbem modules."""


class FhbemError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(FhbemError, ValueError):
    """Invalid user input: malformed config, bad indices, missing data."""


class PreconditionError(FhbemError, ValueError):
    """An operation was called outside its documented domain."""


class DomainError(FhbemError, ValueError):
    """A special function was evaluated outside its domain."""


class SingularityError(FhbemError, ValueError):
    """A kernel was evaluated at coincident points."""


class NearSingularityError(SingularityError):
    """A field point lies on or too close to a mesh element."""

    def __init__(self, message, element_index=None):
        super().__init__(message)
        self.element_index = element_index


class DivergenceError(FhbemError, ArithmeticError):
    """A requested singular integral is infinite."""


class SolverError(FhbemError, ArithmeticError):
    """The dense factorisation hit an exactly singular pivot."""

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index
