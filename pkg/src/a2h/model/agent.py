"""Agent-side state the decision function evaluates."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from ..errors import SchemaViolation
from ..wire import (
    check_fields,
    get_bool,
    get_int,
    get_number,
    get_object,
    get_str,
    get_str_list,
)


class ActionFlag(str, Enum):
    REQUIRE_APPROVAL = "REQUIRE_APPROVAL"
    IRREVERSIBLE = "IRREVERSIBLE"


class TriggerKind(str, Enum):
    AMBIGUITY = "AMBIGUITY"
    CRITICALITY = "CRITICALITY"
    RESOURCE_EXHAUSTION = "RESOURCE_EXHAUSTION"


class DecisionKind(str, Enum):
    CONTINUE = "CONTINUE"
    HALT = "HALT"
    REQUEST_HUMAN = "REQUEST_HUMAN"


@dataclass(frozen=True)
class ActionProposal:
    """What the agent plans to do next, with its own confidence estimate."""

    name: str
    arguments: tuple[tuple[str, str], ...] = ()
    confidence: float = 1.0
    flags: frozenset[ActionFlag] = frozenset()

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")
        object.__setattr__(self, "arguments", tuple(self.arguments))
        object.__setattr__(self, "flags", frozenset(self.flags))

    def argument_map(self) -> dict[str, str]:
        return dict(self.arguments)

    def to_wire(self) -> dict:
        return {
            "name": self.name,
            "arguments": dict(sorted(self.arguments)),
            "confidence": self.confidence,
            "flags": sorted(f.value for f in self.flags),
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "ActionProposal":
        check_fields(doc, required=("name", "arguments", "confidence", "flags"))
        args_doc = get_object(doc, "arguments")
        for key, val in args_doc.items():
            if not isinstance(val, str):
                raise SchemaViolation(f"arguments.{key}", "argument values must be strings")
        confidence = get_number(doc, "confidence")
        if not 0.0 <= confidence <= 1.0:
            raise SchemaViolation("confidence", "confidence must be in [0,1]")
        flags = set()
        for raw in get_str_list(doc, "flags"):
            try:
                flags.add(ActionFlag(raw))
            except ValueError:
                raise SchemaViolation("flags", f"unknown flag: {raw}")
        return cls(
            name=get_str(doc, "name"),
            arguments=tuple(sorted(args_doc.items())),
            confidence=confidence,
            flags=frozenset(flags),
        )


@dataclass(frozen=True)
class AgentState:
    """Snapshot of an agent's loop position fed to the decision function.

    ``max_steps`` is the agent's own declared budget; the engine halts or
    escalates before ``step_count`` can exceed it by more than one.
    """

    agent_id: str
    step_count: int
    max_steps: int
    next_action: ActionProposal | None = None
    recent_action_hashes: tuple[str, ...] = ()
    terminal: bool = False

    def __post_init__(self):
        if self.step_count < 0:
            raise ValueError("step_count must be non-negative")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.step_count > self.max_steps + 1:
            raise ValueError("step_count may exceed max_steps by at most one")
        object.__setattr__(
            self, "recent_action_hashes", tuple(self.recent_action_hashes))

    def to_wire(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "step_count": self.step_count,
            "max_steps": self.max_steps,
            "next_action": self.next_action.to_wire() if self.next_action else None,
            "recent_action_hashes": list(self.recent_action_hashes),
            "terminal": self.terminal,
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "AgentState":
        check_fields(doc, required=(
            "agent_id", "step_count", "max_steps", "next_action",
            "recent_action_hashes", "terminal"))
        raw_action = doc["next_action"]
        if raw_action is None:
            action = None
        elif isinstance(raw_action, dict):
            action = ActionProposal.from_wire(raw_action)
        else:
            raise SchemaViolation("next_action", "next_action must be an object or null")
        try:
            return cls(
                agent_id=get_str(doc, "agent_id"),
                step_count=get_int(doc, "step_count"),
                max_steps=get_int(doc, "max_steps"),
                next_action=action,
                recent_action_hashes=tuple(get_str_list(doc, "recent_action_hashes")),
                terminal=get_bool(doc, "terminal"),
            )
        except ValueError as exc:
            raise SchemaViolation("step_count", str(exc))


@dataclass(frozen=True)
class Decision:
    """Outcome of the decision function. ``trigger`` is present exactly
    when the decision is REQUEST_HUMAN."""

    value: DecisionKind
    trigger: TriggerKind | None = None

    def __post_init__(self):
        if (self.value is DecisionKind.REQUEST_HUMAN) != (self.trigger is not None):
            raise ValueError("trigger must be present iff decision is REQUEST_HUMAN")

    def to_wire(self) -> dict:
        doc: dict[str, Any] = {"value": self.value.value}
        if self.trigger is not None:
            doc["trigger"] = self.trigger.value
        return doc
