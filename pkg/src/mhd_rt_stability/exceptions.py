"""
Custom exceptions for the MHD Rayleigh-Taylor stability solver.
"""

from typing import Any, Dict, List, Optional


class MHDStabilityError(Exception):
    """Base exception for all solver errors."""

    pass


class InvalidInputError(MHDStabilityError, ValueError):
    """Raised when an operation is called outside its preconditions."""

    pass


class ConfigurationError(MHDStabilityError):
    """Raised when a run configuration does not validate.

    Args:
        message: Human readable description of the violation
        path: Dotted path of the offending field (e.g. ``params.rho_plus``)
    """

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EigensolveError(MHDStabilityError):
    """Raised when a dense eigensolve fails or returns an inaccurate pair."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ConvergenceError(MHDStabilityError):
    """Raised when a bisection or a refinement does not reach its tolerance."""

    def __init__(self, message: str, trace: Optional[List[Any]] = None):
        self.trace = trace or []
        super().__init__(message)


class BracketError(MHDStabilityError):
    """Raised when the onset of instability cannot be bracketed."""

    pass


class DegenerateTraceError(MHDStabilityError):
    """Raised when every admissible mode vanishes on the interface."""

    pass
