"""Exception types shared across the package."""

from __future__ import annotations


class TwlocError(Exception):
    """Base class for every error raised by twloc."""


class ParameterError(TwlocError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(ParameterError):
    """A function was evaluated outside its domain (e.g. negative frequency)."""


class WindowError(TwlocError):
    """A time window is too short for the requested operation."""


class ConfigError(ParameterError):
    """Invalid configuration; ``fields`` names the offending keys."""

    def __init__(self, message: str, fields: list[str] | tuple[str, ...] = ()):
        self.fields = tuple(fields)
        if self.fields:
            message = f"{message} (fields: {', '.join(self.fields)})"
        super().__init__(message)


class MethodError(TwlocError):
    """The localization method could not produce a result.

    ``step`` is the label of the processing step that failed (``"II"`` .. ``"VI"``).
    """

    def __init__(self, message: str, step: str | None = None):
        self.step = step
        if step:
            message = f"step {step}: {message}"
        super().__init__(message)


class InsufficientDataError(MethodError):
    """Too few valid frequencies to reach the quorum."""


class AmbiguousSideError(MethodError):
    """Side detection could not decide which section holds the event."""
