"""Suspend/resume checkpoints for the asynchronous interaction pattern.

A checkpoint freezes the agent state plus an opaque context blob before
the agent suspends. Serialization is canonical, so store-then-restore
round-trips are byte-identical: serialize(restore(serialize(c))) equals
serialize(c).

``interaction_id`` may be empty at creation time; the broker stamps it
when the interaction is opened (the id does not exist before then).
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, replace
from typing import Any, Mapping, Union

from ..errors import SchemaViolation
from ..wire import canonical_dumps_bytes, canonical_loads, check_fields, get_int, get_number, get_object, get_str, is_uuid4
from .agent import AgentState


@dataclass(frozen=True)
class Checkpoint:
    version: int
    interaction_id: str
    agent_state: AgentState
    opaque_context: bytes
    created_at: float

    def __post_init__(self):
        if self.version < 1:
            raise ValueError("version must be >= 1")
        if self.interaction_id and not is_uuid4(self.interaction_id):
            raise ValueError("interaction_id must be empty or a lowercase v4 UUID")

    def bound_to(self, interaction_id: str) -> "Checkpoint":
        return replace(self, interaction_id=interaction_id)

    def to_wire(self) -> dict:
        return {
            "version": self.version,
            "interaction_id": self.interaction_id,
            "agent_state": self.agent_state.to_wire(),
            "opaque_context": base64.b64encode(self.opaque_context).decode("ascii"),
            "created_at": self.created_at,
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "Checkpoint":
        check_fields(doc, required=(
            "version", "interaction_id", "agent_state", "opaque_context", "created_at"))
        raw_ctx = get_str(doc, "opaque_context")
        try:
            ctx = base64.b64decode(raw_ctx, validate=True)
        except Exception:
            raise SchemaViolation("opaque_context", "must be base64")
        try:
            return cls(
                version=get_int(doc, "version"),
                interaction_id=get_str(doc, "interaction_id"),
                agent_state=AgentState.from_wire(get_object(doc, "agent_state")),
                opaque_context=ctx,
                created_at=get_number(doc, "created_at"),
            )
        except ValueError as exc:
            raise SchemaViolation("version", str(exc))


def serialize_checkpoint(cp: Checkpoint) -> bytes:
    return canonical_dumps_bytes(cp.to_wire())


def restore_checkpoint(raw: Union[bytes, str]) -> Checkpoint:
    obj = canonical_loads(raw)
    if not isinstance(obj, dict):
        raise SchemaViolation("$", "checkpoint must be an object")
    return Checkpoint.from_wire(obj)
