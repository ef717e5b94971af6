"""Exception taxonomy shared across the engine."""

from __future__ import annotations


class SchemabotError(Exception):
    """Base class for all engine errors."""


class InputSyntaxError(SchemabotError):
    """A schema/DB/corpus file is structurally malformed.

    Carries a human message plus, when known, the 1-based line/column of
    the offending text.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationFailure(SchemabotError):
    """One or more invariants are violated; all diagnostics are reported."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"{len(self.diagnostics)} validation error(s): {lines}")


class UnknownTurnId(SchemabotError):
    def __init__(self, turn_id: str):
        self.turn_id = turn_id
        super().__init__(f"no template turn with id {turn_id!r}")


class EmptySchemaSet(SchemabotError):
    pass


class ParseFailure(SchemabotError):
    """An LLM completion could not be parsed under the output convention."""


class UnknownDomain(ParseFailure):
    def __init__(self, domain: str):
        self.domain = domain
        super().__init__(f"domain {domain!r} is not bound to any schema")


class UnknownSlot(ParseFailure):
    def __init__(self, slot: str, domain: str = ""):
        self.slot = slot
        self.domain = domain
        where = f" in domain {domain!r}" if domain else ""
        super().__init__(f"slot {slot!r} is not declared{where}")


class UnknownValue(ParseFailure):
    def __init__(self, slot: str, value: str):
        self.slot = slot
        self.value = value
        super().__init__(f"value {value!r} is not legal for categorical slot {slot!r}")


class MalformedPlaceholder(SchemabotError):
    pass


class MissingAction(SchemabotError):
    pass


class DomainMismatch(SchemabotError):
    pass


class SessionClosed(SchemabotError):
    pass


class TurnInProgress(SchemabotError):
    """A second message reached a session while a turn was still running."""


class Misalignment(SchemabotError):
    pass


class LengthMismatch(SchemabotError):
    pass


class EmptyCorpus(SchemabotError):
    pass


class OutOfRange(SchemabotError):
    pass


class ConfigError(SchemabotError):
    pass


class BackendError(SchemabotError):
    """Base class for LLM backend failures."""


class Timeout(BackendError):
    pass


class RateLimited(BackendError):
    pass


class AuthFailure(BackendError):
    pass


class ProviderError(BackendError):
    def __init__(self, message: str, status: int | None = None, body: str = ""):
        self.status = status
        self.body = body[:500]
        if status is not None:
            message = f"{message} (HTTP {status}: {self.body[:120]})"
        super().__init__(message)
