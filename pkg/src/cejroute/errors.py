"""Exception types shared across the pipeline."""

from __future__ import annotations


class CejRouteError(Exception):
    """Base class for all package errors."""


class SchemaError(CejRouteError):
    """A task schema or label violates its invariants."""


class DatasetError(CejRouteError):
    """One or more records violate the dataset contract.

    ``violations`` is a list of (instance_id, kind, detail) tuples; every
    offending record is reported, not just the first.
    """

    def __init__(self, violations: list[tuple[str, str, str]]):
        self.violations = violations
        lines = [f"{iid}: {kind}: {detail}" for iid, kind, detail in violations]
        super().__init__("dataset validation failed:\n" + "\n".join(lines))


class ConfigError(CejRouteError):
    """A configuration value is out of range or inconsistent."""


class GatewayError(CejRouteError):
    """A chat-completion call failed after exhausting its retry budget."""

    def __init__(self, message: str, status: int | None = None, body: str | None = None):
        super().__init__(message)
        self.status = status
        self.body = body


class UnscriptedRequestError(GatewayError):
    """The mock transport received a request no script rule matches."""


class ParseError(CejRouteError):
    """A structured LLM payload could not be recovered.

    Carries the raw text so transcripts can store the evidence verbatim.
    """

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class PhaseError(CejRouteError):
    """A pipeline phase failed; the manifest records the partial state."""
