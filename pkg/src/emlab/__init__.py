"""Numerical experiments on elliptic measures of degenerate variational
operators on corner Cantor sets."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConsistencyError, DomainError, EmlError, InsufficientDepth, InvalidArgument, NoTestPossible,
    ResourceError, SolverFailure, StructuralError,
)
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "__version__", "BACKEND", "ConsistencyError", "DomainError", "EmlError", "InsufficientDepth",
    "InvalidArgument", "NoTestPossible", "ResourceError", "SolverFailure", "StructuralError",
]
