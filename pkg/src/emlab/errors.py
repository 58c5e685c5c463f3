"""Exception hierarchy shared by all emlab modules."""


class EmlError(Exception):
    """Base class for every error raised by emlab."""


class InvalidArgument(EmlError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(EmlError, ValueError):
    """A function was evaluated outside its domain (e.g. Df at eta = 0)."""


class StructuralError(EmlError):
    """The integrand violates convexity or the structural bounds."""


class InsufficientDepth(EmlError, ValueError):
    """The Cantor tree is too shallow for the requested scale."""


class ResourceError(EmlError):
    """A configured resource budget (vertex cap) would be exceeded."""

    def __init__(self, message, attempted=None):
        super().__init__(message)
        self.attempted = attempted


class SolverFailure(EmlError):
    """Newton continuation failed; carries the continuation trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class ConsistencyError(EmlError):
    """A computed quantity contradicts the discrete weak formulation."""


class NoTestPossible(EmlError):
    """No admissible test function exists for the subsolution check."""
