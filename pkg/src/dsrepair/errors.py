"""Shared exception types."""


class DsRepairError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(DsRepairError):
    """A domain object violates one of its invariants.

    ``field`` names the offending field when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class DumpParseError(DsRepairError):
    """A graph dump line could not be parsed."""

    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


class QuerySyntaxError(DsRepairError):
    """A SELECT query could not be parsed."""

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}")


class PromptBuildError(DsRepairError):
    """A repair prompt could not be assembled for the requested mode."""

    def __init__(self, message: str, section: str | None = None):
        self.section = section
        if section:
            message = f"section {section!r}: {message}"
        super().__init__(message)


class ConfigError(DsRepairError):
    """Bad CLI/provider configuration."""


class CorpusError(DsRepairError):
    """A benchmark corpus could not be used (e.g. mismatched task sets)."""


class ProviderError(DsRepairError):
    """Base class for chat-completion provider failures."""


class AuthError(ProviderError):
    """Authentication rejected; never retried."""


class RateLimitError(ProviderError):
    """Provider throttled the request; retryable."""


class ProviderTimeout(ProviderError):
    """Request timed out; retryable."""


class MalformedResponseError(ProviderError):
    """Provider returned a body the client cannot interpret."""


class ReplayExhaustedError(ProviderError):
    """A replay transcript has no entry left for the request."""


class RunnerError(DsRepairError):
    """The sandbox runner process failed or misbehaved."""
