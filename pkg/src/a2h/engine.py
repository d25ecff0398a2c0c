"""Escalation decision engine.

Maps an agent state to CONTINUE, HALT, or REQUEST_HUMAN by evaluating
three triggers:

    AMBIGUITY            next-action confidence strictly below epsilon
    CRITICALITY          next action flagged REQUIRE_APPROVAL or IRREVERSIBLE
    RESOURCE_EXHAUSTION  step budget reached, or a repeating action loop

When several triggers fire at once, criticality wins, then ambiguity,
then resource exhaustion: safety outranks doubt outranks fatigue.
Everything here is pure; callers may share config across threads.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .model import (
    AgentState,
    Decision,
    DecisionKind,
    ExpectedInput,
    IntentPacket,
    Pattern,
    PrimitiveType,
    RequiredInput,
    TriggerKind,
)
from .wire import canonical_loads, check_fields, get_int, get_number

DEFAULT_EPSILON = 0.8
DEFAULT_MAX_STEPS = 50
DEFAULT_LOOP_WINDOW = 5
DEFAULT_LOOP_REPEATS = 3


@dataclass(frozen=True)
class EngineConfig:
    epsilon: float = DEFAULT_EPSILON
    max_steps: int = DEFAULT_MAX_STEPS
    loop_window: int = DEFAULT_LOOP_WINDOW
    loop_repeats: int = DEFAULT_LOOP_REPEATS

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.loop_window < 1:
            raise ValueError("loop_window must be positive")
        if self.loop_repeats < 2:
            raise ValueError("loop_repeats must be at least 2")

    def override(self, **kwargs: Any) -> "EngineConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "EngineConfig":
        check_fields(doc, required=(), optional=(
            "epsilon", "max_steps", "loop_window", "loop_repeats"))
        cfg = cls()
        return cfg.override(
            epsilon=get_number(doc, "epsilon") if "epsilon" in doc else None,
            max_steps=get_int(doc, "max_steps") if "max_steps" in doc else None,
            loop_window=get_int(doc, "loop_window") if "loop_window" in doc else None,
            loop_repeats=get_int(doc, "loop_repeats") if "loop_repeats" in doc else None,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        doc = canonical_loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, Mapping):
            raise ValueError("engine config must be an object")
        return cls.from_wire(doc)


def check_ambiguity(state: AgentState, cfg: EngineConfig) -> bool:
    """Strict inequality: confidence equal to epsilon does not fire."""
    action = state.next_action
    return action is not None and action.confidence < cfg.epsilon


def check_criticality(state: AgentState) -> bool:
    """Fires on any flagged action, independent of confidence."""
    action = state.next_action
    return action is not None and bool(action.flags)


def check_resource_exhaustion(state: AgentState, cfg: EngineConfig) -> bool:
    """Step budget reached, or one digest repeats loop_repeats times within
    the last loop_window action hashes. Terminal states never escalate."""
    if state.terminal:
        return False
    if state.step_count >= cfg.max_steps:
        return True
    window = state.recent_action_hashes[-cfg.loop_window:]
    if window:
        counts = Counter(window)
        if max(counts.values()) >= cfg.loop_repeats:
            return True
    return False


def decide(state: AgentState, cfg: EngineConfig | None = None) -> Decision:
    """Pure decision function; equal inputs give equal outputs."""
    cfg = cfg or EngineConfig()
    if state.terminal:
        return Decision(value=DecisionKind.HALT)
    if check_criticality(state):
        return Decision(value=DecisionKind.REQUEST_HUMAN, trigger=TriggerKind.CRITICALITY)
    if check_ambiguity(state, cfg):
        return Decision(value=DecisionKind.REQUEST_HUMAN, trigger=TriggerKind.AMBIGUITY)
    if check_resource_exhaustion(state, cfg):
        return Decision(value=DecisionKind.REQUEST_HUMAN,
                        trigger=TriggerKind.RESOURCE_EXHAUSTION)
    return Decision(value=DecisionKind.CONTINUE)


def select_primitive(trigger: TriggerKind, state: AgentState,
                     urgent: bool = False) -> tuple[PrimitiveType, Pattern]:
    """Primitive and pattern for a fired trigger.

    Criticality demands a synchronous permission gate. Ambiguity asks for
    clarification, synchronously only when the caller marks the blocked
    action urgent. Resource exhaustion solicits guidance asynchronously.
    NOTIFICATION is never trigger-selected; agents emit it explicitly.
    """
    if trigger is TriggerKind.CRITICALITY:
        return PrimitiveType.PERMISSION, Pattern.SYNC
    if trigger is TriggerKind.AMBIGUITY:
        return PrimitiveType.CLARIFICATION, Pattern.SYNC if urgent else Pattern.ASYNC
    return PrimitiveType.SOLICITATION, Pattern.ASYNC


def build_intent_packet(state: AgentState, trigger: TriggerKind,
                        options: Sequence[str] = ()) -> IntentPacket:
    """Assemble the why / what-happened / what-is-needed payload.

    ``options`` must carry the candidate choices when the trigger is
    AMBIGUITY (a clarification needs at least two).
    """
    action = state.next_action
    if action is not None:
        args = ", ".join(f"{k}={v}" for k, v in action.arguments)
        context = f"Proposed action: {action.name}({args})"
    else:
        context = f"Agent {state.agent_id} at step {state.step_count} has no planned action"

    if trigger is TriggerKind.AMBIGUITY:
        conf = action.confidence if action else 0.0
        reason = f"Ambiguity: next-action confidence {conf:g} is below the threshold"
        required = RequiredInput(kind=ExpectedInput.SELECTION, options=tuple(options))
    elif trigger is TriggerKind.CRITICALITY:
        flags = ", ".join(sorted(f.value for f in action.flags)) if action else ""
        reason = f"Criticality: proposed action is flagged {flags}"
        required = RequiredInput(kind=ExpectedInput.BOOLEAN)
    else:
        reason = (f"Resource exhaustion: {state.step_count} steps used of "
                  f"{state.max_steps}, or a repeating action loop was detected")
        required = RequiredInput(kind=ExpectedInput.DATA)

    return IntentPacket(reason=reason, context=context, required_input=required)
