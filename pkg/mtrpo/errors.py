"""
Exception types for the mtrpo library.

Every error raised by the numerical modules derives from MtrpoError and
carries the name of the failing operation plus a details dictionary, so the
experiment layer can log a precise diagnostic without parsing messages.
"""

from typing import Any, Dict, Optional


class MtrpoError(Exception):
    """Base exception for all library errors."""

    def __init__(self, message: str, operation: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.operation = operation
        self.details = details or {}


class ShapeError(MtrpoError, ValueError):
    """Raised when array shapes or vector lengths are inconsistent."""


class ValidationError(MtrpoError, ValueError):
    """Raised when a value violates a type invariant (probabilities, ranges)."""


class NumericalError(MtrpoError, ArithmeticError):
    """Raised when a solve leaves a residual, or a quantity is not finite."""


class BoundInputError(MtrpoError, ValueError):
    """Raised when a bound variant is evaluated without the inputs it needs."""


class ConfigError(MtrpoError, ValueError):
    """Raised for invalid experiment or optimizer configuration."""
