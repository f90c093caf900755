"""Exception types shared across the package."""

from __future__ import annotations


class CutFEMError(Exception):
    """Base class for all package errors."""


class ConfigError(CutFEMError, ValueError):
    """Invalid user-provided configuration."""


class GeometryError(CutFEMError):
    """Invalid interface polygon (self-intersection, boundary contact, ...)."""


class StepFailure(CutFEMError):
    """A time step could not be completed.

    ``step`` carries the index of the failing step when known.
    """

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


class EvaluationError(CutFEMError):
    """A finite element field was evaluated outside its support."""


class SingularMatrixError(CutFEMError):
    """Sparse factorization hit a (numerically) singular pivot."""

    def __init__(self, message: str, block: str | None = None):
        self.block = block
        super().__init__(message)
