"""Exception hierarchy shared by every module."""

from __future__ import annotations


class GovernanceError(Exception):
    """Base class for all library errors."""


class ValidationError(GovernanceError, ValueError):
    """Input violates a documented precondition."""


class DomainError(GovernanceError, ValueError):
    """Numeric argument outside the function's domain (e.g. negative coins)."""


class ConfigError(GovernanceError, ValueError):
    """SystemConfig parameters are inconsistent."""


class UnsupportedRuleError(GovernanceError, ValueError):
    """Operation is not defined for the config's voting rule."""


class ResourceBoundError(GovernanceError):
    """Exhaustive enumeration would exceed the configured bound."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class IngestError(ValidationError):
    """Malformed event-log record. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = f"line {line}: " if line is not None else ""
        what = f"field '{field}': " if field else ""
        super().__init__(f"{where}{what}{message}")
        self.line = line
        self.field = field


class DateOutOfRange(GovernanceError, LookupError):
    """Requested snapshot date is not materialized in the dataset."""
