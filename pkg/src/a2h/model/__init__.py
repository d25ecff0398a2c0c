"""Protocol vocabulary: every data type crossing a module boundary.

All values here are immutable and safe to share between threads.
"""

from .identity import HumanId, parse_human_id
from .card import (
    AvailabilityStatus,
    CapabilityTag,
    Channel,
    Endpoint,
    HumanCard,
    Profile,
    ValidationReport,
    Violation,
    normalize_tag,
    validate_card,
)
from .agent import (
    ActionFlag,
    ActionProposal,
    AgentState,
    Decision,
    DecisionKind,
    TriggerKind,
)
from .message import (
    A2HMessage,
    Blocking,
    ExpectedInput,
    IntentPacket,
    Pattern,
    PrimitiveType,
    RequiredInput,
    deserialize_message,
    serialize_message,
)
from .response import (
    UNSET,
    DecisionValue,
    HumanResponse,
    ResponseKind,
    kind_for_expected,
)
from .checkpoint import Checkpoint, restore_checkpoint, serialize_checkpoint

__all__ = [
    "A2HMessage",
    "ActionFlag",
    "ActionProposal",
    "AgentState",
    "AvailabilityStatus",
    "Blocking",
    "CapabilityTag",
    "Channel",
    "Checkpoint",
    "Decision",
    "DecisionKind",
    "DecisionValue",
    "Endpoint",
    "ExpectedInput",
    "HumanCard",
    "HumanId",
    "HumanResponse",
    "IntentPacket",
    "Pattern",
    "PrimitiveType",
    "Profile",
    "RequiredInput",
    "ResponseKind",
    "TriggerKind",
    "UNSET",
    "ValidationReport",
    "Violation",
    "deserialize_message",
    "kind_for_expected",
    "normalize_tag",
    "parse_human_id",
    "restore_checkpoint",
    "serialize_checkpoint",
    "serialize_message",
    "validate_card",
]
