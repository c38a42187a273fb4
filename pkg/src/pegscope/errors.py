"""Exception hierarchy shared across pegscope modules."""
from __future__ import annotations


class PegscopeError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PegscopeError, ValueError):
    """An input violates a domain precondition (non-positive price, empty window, ...)."""


class ParseError(PegscopeError, ValueError):
    """A data file does not follow its declared format."""

    def __init__(self, message: str, *, source: str | None = None, location: int | None = None):
        self.source = source
        self.location = location
        prefix = ""
        if source is not None:
            prefix += f"{source}"
        if location is not None:
            prefix += f":{location}"
        super().__init__(f"{prefix}: {message}" if prefix else message)


class IntegrityError(PegscopeError):
    """Duplicate keys or conflicting re-inserts."""


class NotFoundError(PegscopeError, LookupError):
    """A keyed lookup found nothing."""


class ExtractionError(PegscopeError):
    """A disclosure body lacks a required monetary field."""

    def __init__(self, field: str, source_id: str | None = None):
        self.field = field
        self.source_id = source_id
        where = f" in {source_id}" if source_id else ""
        super().__init__(f"required field {field!r} not found{where}")


class ConfigurationError(PegscopeError):
    pass


class TransportError(PegscopeError):
    pass


class ContextError(PegscopeError):
    """The event agent could not build a market context."""


class AnalysisError(PegscopeError):
    """A reasoning backend failed; the partial trace is attached."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class PipelineAborted(PegscopeError):
    """A pipeline run stopped before classification; carries the persisted trace."""

    def __init__(self, stage: str, reason: str, trace=None):
        super().__init__(f"aborted at {stage} stage: {reason}")
        self.stage = stage
        self.reason = reason
        self.trace = trace
