"""Interaction primitives and the A2H-JSON message document.

The four primitives carry fixed blocking semantics and a fixed expected
response shape:

    PERMISSION     hard block    boolean (allow / deny)
    CLARIFICATION  soft block    selection from options
    SOLICITATION   soft block    structured data
    NOTIFICATION   non-blocking  none (acknowledgment optional)

The message schema is strict and closed: serialization is canonical
(sorted keys, no extra whitespace) and deserialization rejects unknown
fields, so wire drift fails loudly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping

from ..errors import SchemaViolation
from ..wire import (
    canonical_dumps,
    canonical_loads,
    check_fields,
    get_number,
    get_str,
    get_str_list,
    is_uuid4,
)
from .identity import HumanId, parse_human_id

MAX_SUMMARY_LENGTH = 200
MAX_ACTIONS = 10


class Blocking(str, Enum):
    HARD = "HARD"
    SOFT = "SOFT"
    NONE = "NONE"


class ExpectedInput(str, Enum):
    """Response shape a primitive expects from the human."""

    BOOLEAN = "BOOLEAN"
    SELECTION = "SELECTION"
    DATA = "DATA"
    NONE = "NONE"


class PrimitiveType(str, Enum):
    PERMISSION = "PERMISSION"
    CLARIFICATION = "CLARIFICATION"
    SOLICITATION = "SOLICITATION"
    NOTIFICATION = "NOTIFICATION"

    @property
    def blocking(self) -> Blocking:
        return _BLOCKING[self]

    @property
    def expected_input(self) -> ExpectedInput:
        return _EXPECTED[self]


_BLOCKING = {
    PrimitiveType.PERMISSION: Blocking.HARD,
    PrimitiveType.CLARIFICATION: Blocking.SOFT,
    PrimitiveType.SOLICITATION: Blocking.SOFT,
    PrimitiveType.NOTIFICATION: Blocking.NONE,
}

_EXPECTED = {
    PrimitiveType.PERMISSION: ExpectedInput.BOOLEAN,
    PrimitiveType.CLARIFICATION: ExpectedInput.SELECTION,
    PrimitiveType.SOLICITATION: ExpectedInput.DATA,
    PrimitiveType.NOTIFICATION: ExpectedInput.NONE,
}


class Pattern(str, Enum):
    SYNC = "SYNC"
    ASYNC = "ASYNC"


@dataclass(frozen=True)
class RequiredInput:
    """What the human must provide; options accompany SELECTION only."""

    kind: ExpectedInput
    options: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if self.kind is ExpectedInput.SELECTION:
            if len(self.options) < 2:
                raise ValueError("SELECTION input needs at least 2 options")
        elif self.options:
            raise ValueError(f"{self.kind.value} input carries no options")


@dataclass(frozen=True)
class IntentPacket:
    """Why the agent is escalating, what happened, and what it needs."""

    reason: str
    context: str
    required_input: RequiredInput

    def __post_init__(self):
        if not self.reason:
            raise ValueError("reason must be non-empty")
        if not self.context:
            raise ValueError("context must be non-empty")


@dataclass(frozen=True)
class A2HMessage:
    """The renderable message document sent to a human.

    For PERMISSION the two actions map positionally to allow (index 0)
    and deny (index 1). For CLARIFICATION, ``options`` are the selectable
    values; ``actions``, when present, are display labels for the same
    options and must align one-to-one (buttons show the label, responses
    carry the option value).
    """

    interaction_id: str
    target: HumanId
    type: PrimitiveType
    summary: str
    body: str
    actions: tuple[str, ...] = ()
    options: tuple[str, ...] = ()
    deadline: float | None = None
    pattern: Pattern = Pattern.ASYNC

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "options", tuple(self.options))
        _validate_message(self)

    def button_labels(self) -> tuple[str, ...]:
        """Labels to render, one button per action/option."""
        if self.type is PrimitiveType.CLARIFICATION:
            return self.actions if self.actions else self.options
        return self.actions

    def button_values(self) -> tuple[str, ...]:
        """Response payloads keyed by button index."""
        if self.type is PrimitiveType.CLARIFICATION:
            return self.options
        return self.actions

    def to_wire(self) -> dict:
        doc: dict[str, Any] = {
            "interaction_id": self.interaction_id,
            "target": self.target.canonical,
            "type": self.type.value,
            "summary": self.summary,
            "body": self.body,
            "actions": list(self.actions),
            "pattern": self.pattern.value,
        }
        if self.type is PrimitiveType.CLARIFICATION:
            doc["options"] = list(self.options)
        if self.deadline is not None:
            doc["deadline"] = self.deadline
        return doc


def _validate_message(msg: A2HMessage) -> None:
    # Fields are checked in sorted name order so the first reported
    # violation is deterministic.
    if len(msg.actions) > MAX_ACTIONS:
        raise SchemaViolation("actions", f"at most {MAX_ACTIONS} actions")
    if any(not a for a in msg.actions):
        raise SchemaViolation("actions", "action labels must be non-empty")
    if len(set(msg.actions)) != len(msg.actions):
        raise SchemaViolation("actions", "action labels must be distinct")
    if msg.type is PrimitiveType.PERMISSION and len(msg.actions) != 2:
        raise SchemaViolation(
            "actions", "PERMISSION carries exactly two actions (allow, deny)")
    if msg.type is PrimitiveType.NOTIFICATION and msg.actions:
        raise SchemaViolation("actions", "NOTIFICATION carries no actions")
    if msg.type is PrimitiveType.CLARIFICATION and msg.actions:
        if len(msg.actions) != len(msg.options):
            raise SchemaViolation(
                "actions", "CLARIFICATION display labels must align with options")

    if not isinstance(msg.body, str):
        raise SchemaViolation("body", "body must be a string")

    if msg.deadline is not None:
        if isinstance(msg.deadline, bool) or not isinstance(msg.deadline, (int, float)):
            raise SchemaViolation("deadline", "deadline must be a number")
        if msg.deadline < 0:
            raise SchemaViolation("deadline", "deadline must be non-negative")

    if not is_uuid4(msg.interaction_id):
        raise SchemaViolation(
            "interaction_id", "interaction_id must be a lowercase v4 UUID")

    if msg.type is PrimitiveType.CLARIFICATION:
        if len(msg.options) < 2:
            raise SchemaViolation("options", "CLARIFICATION needs at least 2 options")
        if any(not o for o in msg.options):
            raise SchemaViolation("options", "options must be non-empty")
        if len(set(msg.options)) != len(msg.options):
            raise SchemaViolation("options", "options must be distinct")
    elif msg.options:
        raise SchemaViolation("options", "options are only legal on CLARIFICATION")

    if msg.type is PrimitiveType.NOTIFICATION and msg.pattern is not Pattern.ASYNC:
        raise SchemaViolation("pattern", "NOTIFICATION is non-blocking, pattern must be ASYNC")

    if not msg.summary:
        raise SchemaViolation("summary", "summary must be non-empty")
    if len(msg.summary) > MAX_SUMMARY_LENGTH:
        raise SchemaViolation("summary", f"summary exceeds {MAX_SUMMARY_LENGTH} characters")
    if "\n" in msg.summary or "\r" in msg.summary:
        raise SchemaViolation("summary", "summary must be a single line")


def serialize_message(msg: A2HMessage) -> str:
    """Canonical text form: sorted keys, compact separators, UTF-8-safe."""
    return canonical_dumps(msg.to_wire())


def deserialize_message(doc: str | bytes | Mapping[str, Any]) -> A2HMessage:
    """Strict parse of a message document (text or already-parsed object)."""
    obj = canonical_loads(doc) if isinstance(doc, (str, bytes)) else doc
    if not isinstance(obj, Mapping):
        raise SchemaViolation("$", "message must be an object")

    try:
        msg_type = PrimitiveType(obj.get("type")) if isinstance(obj.get("type"), str) else None
    except ValueError:
        msg_type = None

    optional = ["deadline"]
    required = ["interaction_id", "target", "type", "summary", "body", "actions", "pattern"]
    if msg_type is PrimitiveType.CLARIFICATION:
        required.append("options")
    else:
        # Reject options on other types with a field-specific message
        # rather than UNKNOWN_FIELD.
        optional.append("options")
    check_fields(obj, required=required, optional=optional)

    raw_type = get_str(obj, "type")
    try:
        parsed_type = PrimitiveType(raw_type)
    except ValueError:
        raise SchemaViolation("type", f"unknown primitive type: {raw_type}")

    raw_pattern = get_str(obj, "pattern")
    try:
        pattern = Pattern(raw_pattern)
    except ValueError:
        raise SchemaViolation("pattern", f"unknown pattern: {raw_pattern}")

    deadline = None
    if "deadline" in obj:
        deadline = get_number(obj, "deadline")

    options: tuple[str, ...] = ()
    if "options" in obj:
        options = tuple(get_str_list(obj, "options"))

    from ..errors import MalformedId

    try:
        target = parse_human_id(get_str(obj, "target"))
    except MalformedId as exc:
        raise SchemaViolation("target", str(exc))

    return A2HMessage(
        interaction_id=get_str(obj, "interaction_id"),
        target=target,
        type=parsed_type,
        summary=get_str(obj, "summary"),
        body=get_str(obj, "body"),
        actions=tuple(get_str_list(obj, "actions")),
        options=options,
        deadline=deadline,
        pattern=pattern,
    )
