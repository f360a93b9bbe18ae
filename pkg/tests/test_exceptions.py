"""
Tests for the solver exception classes.
"""

import pytest

from mhd_rt_stability.exceptions import (
    BracketError,
    ConfigurationError,
    ConvergenceError,
    DegenerateTraceError,
    EigensolveError,
    InvalidInputError,
    MHDStabilityError,
)


class TestExceptions:
    """Test all exception classes."""

    def test_base_error(self):
        """Test base exception class."""
        error = MHDStabilityError("Base error message")
        assert str(error) == "Base error message"
        assert isinstance(error, Exception)

    def test_invalid_input_error_is_value_error(self):
        """Precondition violations can be caught as ValueError."""
        error = InvalidInputError("k = 0")
        assert isinstance(error, MHDStabilityError)
        assert isinstance(error, ValueError)

    def test_configuration_error_with_path(self):
        """The offending field path prefixes the message."""
        error = ConfigurationError("must be positive", path="params.rho_plus")
        assert str(error) == "params.rho_plus: must be positive"
        assert error.path == "params.rho_plus"

    def test_configuration_error_without_path(self):
        error = ConfigurationError("malformed JSON")
        assert str(error) == "malformed JSON"
        assert error.path is None

    def test_eigensolve_error_diagnostics(self):
        """Diagnostics default to an empty dict."""
        error = EigensolveError("failed", diagnostics={"size": 10, "s": 0.5})
        assert error.diagnostics == {"size": 10, "s": 0.5}
        assert EigensolveError("failed").diagnostics == {}

    def test_convergence_error_trace(self):
        error = ConvergenceError("no bracket", trace=[(1.0, -2.0, 0.5)])
        assert error.trace == [(1.0, -2.0, 0.5)]
        assert ConvergenceError("no bracket").trace == []

    def test_exception_inheritance(self):
        """Test that all exceptions inherit properly."""
        for cls in (
            InvalidInputError,
            ConfigurationError,
            EigensolveError,
            ConvergenceError,
            BracketError,
            DegenerateTraceError,
        ):
            with pytest.raises(MHDStabilityError):
                raise cls("test")
