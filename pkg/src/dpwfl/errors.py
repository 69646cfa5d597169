"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


class RunFailure(RuntimeError):
    """A simulation run aborted; ``report`` is JSON-serializable."""

    def __init__(self, kind: str, message: str, **details):
        super().__init__(message)
        self.report = {"error": kind, "message": message, **details}
