"""Normalized human replies.

A response carries exactly one payload field matching its kind:
``decision`` for DECISION, ``selected_option`` for SELECTION, ``data``
for DATA, and nothing for ACK. On the wire the kind is implied by which
payload field is present, matching the canonical response listing
(``interaction_id``, ``human_id``, ``decision``, ``feedback``).

``feedback: null`` is representable and distinct from an absent
feedback field; the module-level UNSET sentinel marks absence.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Mapping, Union

from ..errors import SchemaViolation
from ..wire import canonical_loads, check_fields, get_str, is_uuid4
from .identity import HumanId, parse_human_id
from .message import ExpectedInput


class _Unset:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNSET"

    def __bool__(self) -> bool:
        return False


UNSET = _Unset()


class ResponseKind(str, Enum):
    DECISION = "DECISION"
    SELECTION = "SELECTION"
    DATA = "DATA"
    ACK = "ACK"

    def satisfies(self, expected: ExpectedInput) -> bool:
        return _KIND_FOR_EXPECTED[expected] is self


_KIND_FOR_EXPECTED = {
    ExpectedInput.BOOLEAN: ResponseKind.DECISION,
    ExpectedInput.SELECTION: ResponseKind.SELECTION,
    ExpectedInput.DATA: ResponseKind.DATA,
    ExpectedInput.NONE: ResponseKind.ACK,
}


def kind_for_expected(expected: ExpectedInput) -> ResponseKind:
    return _KIND_FOR_EXPECTED[expected]


class DecisionValue(str, Enum):
    APPROVED = "APPROVED"
    DENIED = "DENIED"


@dataclass(frozen=True)
class HumanResponse:
    interaction_id: str
    human_id: HumanId
    kind: ResponseKind
    decision: DecisionValue | None = None
    selected_option: str | None = None
    data: Union[str, dict, None] = None
    feedback: Union[str, None, _Unset] = UNSET

    def __post_init__(self):
        if not is_uuid4(self.interaction_id):
            raise ValueError("interaction_id must be a lowercase v4 UUID")
        present = {
            "decision": self.decision is not None,
            "selected_option": self.selected_option is not None,
            "data": self.data is not None,
        }
        expected_field = {
            ResponseKind.DECISION: "decision",
            ResponseKind.SELECTION: "selected_option",
            ResponseKind.DATA: "data",
            ResponseKind.ACK: None,
        }[self.kind]
        for name, is_set in present.items():
            if name == expected_field:
                if not is_set:
                    raise ValueError(f"{self.kind.value} response requires {name}")
            elif is_set:
                raise ValueError(
                    f"{self.kind.value} response must not carry {name}")

    def to_wire(self) -> dict:
        doc: dict[str, Any] = {
            "interaction_id": self.interaction_id,
            "human_id": self.human_id.canonical,
        }
        if self.kind is ResponseKind.DECISION:
            doc["decision"] = self.decision.value
        elif self.kind is ResponseKind.SELECTION:
            doc["selected_option"] = self.selected_option
        elif self.kind is ResponseKind.DATA:
            doc["data"] = self.data
        if not isinstance(self.feedback, _Unset):
            doc["feedback"] = self.feedback
        return doc

    @classmethod
    def from_wire(cls, doc: Union[str, bytes, Mapping[str, Any]]) -> "HumanResponse":
        obj = canonical_loads(doc) if isinstance(doc, (str, bytes)) else doc
        if not isinstance(obj, Mapping):
            raise SchemaViolation("$", "response must be an object")
        check_fields(obj, required=("interaction_id", "human_id"),
                     optional=("decision", "selected_option", "data", "feedback"))

        payload_fields = [f for f in ("data", "decision", "selected_option") if f in obj]
        if len(payload_fields) > 1:
            raise SchemaViolation(
                payload_fields[1],
                f"{payload_fields[1]} conflicts with {payload_fields[0]}")

        interaction_id = get_str(obj, "interaction_id")
        if not is_uuid4(interaction_id):
            raise SchemaViolation("interaction_id", "must be a lowercase v4 UUID")
        human_id = parse_human_id(get_str(obj, "human_id"))

        kind = ResponseKind.ACK
        decision = None
        selected_option = None
        data: Union[str, dict, None] = None
        if "decision" in obj:
            raw = get_str(obj, "decision")
            try:
                decision = DecisionValue(raw)
            except ValueError:
                raise SchemaViolation("decision", f"unknown decision: {raw}")
            kind = ResponseKind.DECISION
        elif "selected_option" in obj:
            selected_option = get_str(obj, "selected_option")
            kind = ResponseKind.SELECTION
        elif "data" in obj:
            data = obj["data"]
            if not isinstance(data, (str, dict)):
                raise SchemaViolation("data", "data must be a string or an object")
            kind = ResponseKind.DATA

        feedback: Union[str, None, _Unset] = UNSET
        if "feedback" in obj:
            feedback = obj["feedback"]
            if feedback is not None and not isinstance(feedback, str):
                raise SchemaViolation("feedback", "feedback must be a string or null")

        return cls(
            interaction_id=interaction_id,
            human_id=human_id,
            kind=kind,
            decision=decision,
            selected_option=selected_option,
            data=data,
            feedback=feedback,
        )
