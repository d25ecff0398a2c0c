"""Error hierarchy shared by every layer.

Each error carries a stable machine-readable ``code`` so transports
(HTTP bodies, CLI exit paths, journal records) can map failures
one-to-one without parsing prose.
"""

from __future__ import annotations

from typing import Any


class A2HError(Exception):
    """Base class for all protocol-level failures."""

    code = "A2H_ERROR"

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.details = details

    def to_wire(self) -> dict:
        doc: dict[str, Any] = {"error": self.code, "message": self.message}
        if self.details:
            doc["details"] = {k: v for k, v in sorted(self.details.items())}
        return doc


class MalformedId(A2HError):
    code = "MALFORMED_ID"


class SchemaViolation(A2HError):
    """A wire document or message value breaks the strict schema."""

    code = "SCHEMA_VIOLATION"

    def __init__(self, field: str, message: str = ""):
        super().__init__(message or f"invalid field: {field}", field=field)
        self.field = field


class UnknownField(SchemaViolation):
    """Strict schemas reject fields they do not define."""

    code = "UNKNOWN_FIELD"

    def __init__(self, field: str):
        super().__init__(field, f"unknown field: {field}")


class InvalidCard(A2HError):
    code = "INVALID_CARD"

    def __init__(self, report):
        super().__init__(
            "card failed validation",
            violations=[v.to_wire() for v in report.violations],
        )
        self.report = report


class NotFound(A2HError):
    code = "NOT_FOUND"


class TargetNotFound(A2HError):
    code = "TARGET_NOT_FOUND"


class TargetOffline(A2HError):
    code = "TARGET_OFFLINE"


class MissingCheckpoint(A2HError):
    code = "MISSING_CHECKPOINT"


class Timeout(A2HError):
    code = "TIMEOUT"


class WrongPattern(A2HError):
    code = "WRONG_PATTERN"


class AlreadyClaimed(A2HError):
    code = "ALREADY_CLAIMED"


class Cancelled(A2HError):
    code = "CANCELLED"


class UnknownInteraction(A2HError):
    code = "UNKNOWN_INTERACTION"


class WrongResponder(A2HError):
    code = "WRONG_RESPONDER"


class KindMismatch(A2HError):
    code = "KIND_MISMATCH"


class NotResolved(A2HError):
    code = "NOT_RESOLVED"


class AlreadyResumed(A2HError):
    code = "ALREADY_RESUMED"


class UnsupportedChannel(A2HError):
    code = "UNSUPPORTED_CHANNEL"


class UnparseableReply(A2HError):
    code = "UNPARSEABLE_REPLY"


class ActorMismatch(A2HError):
    code = "ACTOR_MISMATCH"


class InteractionMismatch(A2HError):
    code = "INTERACTION_MISMATCH"


class ScenarioDivergence(A2HError):
    code = "SCENARIO_DIVERGENCE"

    def __init__(self, step: str, message: str = ""):
        super().__init__(message or f"scenario diverged at: {step}", step=step)
        self.step = step


class BindFailure(A2HError):
    code = "BIND_FAILURE"


class StorageFailure(A2HError):
    code = "STORAGE_FAILURE"
