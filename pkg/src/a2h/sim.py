"""Scripted end-to-end scenario: a DevOps agent fixes a leaking service.

A rule-based agent works through three phases against the real registry,
broker and adapters: it discovers the on-call expert by capability tags,
raises a clarification when two config files are equally plausible, and
gates the production restart behind a synchronous permission. A scripted
human (driven through the full render / click / normalize path) stands in
for the expert so the whole trace runs unattended and reproducibly:
ids come from a seeded factory, time from a virtual clock, so equal seeds
give byte-identical trace reports.

In INTERACTIVE mode the scripted human steps aside and responses must
arrive from outside (inbox UI or CLI) through a shared broker.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .adapters import ChannelEvent, extract_action_ids, normalize, render
from .broker import Interaction, InteractionBroker
from .engine import EngineConfig, build_intent_packet, decide, select_primitive
from .errors import ScenarioDivergence, Timeout
from .model import (
    ActionFlag,
    ActionProposal,
    AgentState,
    AvailabilityStatus,
    CapabilityTag,
    Channel,
    Checkpoint,
    DecisionKind,
    DecisionValue,
    Endpoint,
    HumanCard,
    HumanId,
    Pattern,
    PrimitiveType,
    Profile,
    ResponseKind,
    parse_human_id,
)
from .registry import CardRegistry, DiscoveryQuery
from .wire import canonical_dumps, seeded_uuid_factory

SCRIPTED = "SCRIPTED"
INTERACTIVE = "INTERACTIVE"

PRODUCTION_OPTION = "deployment.yaml (Production)"
CANARY_OPTION = "deployment-canary.yaml (Canary)"


class SimClock:
    """Virtual time; the agent advances it explicitly, never the wall."""

    def __init__(self, start: float = 0.0):
        self._now = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def advance(self, dt: float = 1.0) -> None:
        with self._lock:
            self._now += dt


@dataclass(frozen=True)
class ScriptedStep:
    """One planned agent action with its scripted confidence and flags."""

    name: str
    confidence: float
    flags: frozenset[ActionFlag] = frozenset()
    arguments: tuple[tuple[str, str], ...] = ()
    options: tuple[str, ...] = ()
    summary: str | None = None
    body: str | None = None
    actions: tuple[str, ...] | None = None
    urgent: bool = False
    discover_tags: tuple[str, ...] = ()


# Policy actions: ("approve",) ("deny",) ("select", index) ("data", text)
PolicyAction = tuple


@dataclass(frozen=True)
class SimScript:
    steps: tuple[ScriptedStep, ...]
    human_policy: Mapping[str, PolicyAction]
    seed: int = 7
    max_steps: int = 20
    expert_card: HumanCard | None = None
    expert_status: AvailabilityStatus = AvailabilityStatus.AVAILABLE


def expert_card(status: AvailabilityStatus = AvailabilityStatus.AVAILABLE) -> HumanCard:
    """The on-call SRE the scenario discovers."""
    return HumanCard(
        id=parse_human_id("human://bob.sre"),
        profile=Profile(name="Bob", role="Senior SRE", timezone="UTC+0"),
        capabilities=tuple(CapabilityTag(t) for t in ("sre", "kubernetes", "approver")),
        endpoints=(Endpoint(channel=Channel.SLACK, address="slack_webhook_bob"),),
        status=status,
    )


def default_script(seed: int = 7) -> SimScript:
    """The checkout-service memory-leak scenario, three phases.

    The ambiguous step's confidence (0.7) is a scripted placeholder; any
    value strictly below the 0.8 threshold reproduces the same trace.
    """
    return SimScript(
        seed=seed,
        steps=(
            ScriptedStep(
                name="analyze_logs",
                confidence=0.95,
                arguments=(("service", "checkout-service"),),
                discover_tags=("kubernetes",),
            ),
            ScriptedStep(
                name="patch_config",
                confidence=0.7,
                arguments=(("issue", "memory limit"),),
                options=(PRODUCTION_OPTION, CANARY_OPTION),
                summary="Ambiguous Configuration Target",
                body=("I identified a memory limit issue.  Multiple config files "
                      "detected. Which one should I patch?"),
            ),
            ScriptedStep(
                name="kubectl rollout restart",
                confidence=0.98,
                flags=frozenset({ActionFlag.REQUIRE_APPROVAL}),
                arguments=(("target", "checkout-service"),),
                summary="Risk Alert: restart checkout-service",
                body=("Patch applied. Restarting the production cluster will "
                      "roll out the new memory limit.\n"
                      "--- memory: 256Mi\n+++ memory: 512Mi"),
                actions=("Approve Restart", "Deny"),
            ),
        ),
        human_policy={
            "Ambiguous Configuration Target": ("select", 0),
            "Risk Alert": ("approve",),
        },
    )


@dataclass(frozen=True)
class TraceEntry:
    index: int
    at: float
    kind: str
    detail: Mapping[str, object]

    def to_wire(self) -> dict:
        return {"index": self.index, "at": self.at, "kind": self.kind,
                "detail": dict(sorted(self.detail.items()))}


@dataclass
class TraceReport:
    entries: list[TraceEntry] = field(default_factory=list)
    outcome: str = "incomplete"

    def to_wire(self) -> dict:
        return {"outcome": self.outcome,
                "entries": [e.to_wire() for e in self.entries]}

    def to_bytes(self) -> bytes:
        return canonical_dumps(self.to_wire()).encode("utf-8")

    def to_text(self) -> str:
        lines = [f"outcome: {self.outcome}"]
        for e in self.entries:
            detail = " ".join(f"{k}={v}" for k, v in sorted(e.detail.items()))
            lines.append(f"{e.index:3d} t={e.at:6.1f} {e.kind:<20} {detail}")
        return "\n".join(lines) + "\n"

    def find(self, entry_kind: str, **want) -> list[TraceEntry]:
        hits = []
        for e in self.entries:
            if e.kind != entry_kind:
                continue
            if all(e.detail.get(k) == v for k, v in want.items()):
                hits.append(e)
        return hits

    def executed_actions(self) -> list[TraceEntry]:
        return self.find("ACTION_EXECUTED")


class _Trace:
    def __init__(self, clock: SimClock):
        self._clock = clock
        self._lock = threading.Lock()
        self.report = TraceReport()

    def add(self, entry_kind: str, **detail) -> None:
        with self._lock:
            self.report.entries.append(TraceEntry(
                index=len(self.report.entries), at=self._clock(),
                kind=entry_kind, detail=detail))


class ScriptedHuman:
    """Answers interactions per the policy, via the real channel path:
    render the card, click a button (or type), normalize, deliver."""

    def __init__(self, registry: CardRegistry, broker: InteractionBroker,
                 policy: Mapping[str, PolicyAction], trace: _Trace):
        self._registry = registry
        self._broker = broker
        self._policy = policy
        self._trace = trace

    def _action_for(self, itx: Interaction) -> PolicyAction | None:
        for pattern, action in self._policy.items():
            if pattern in itx.message.summary:
                return action
        return None

    def respond(self, itx: Interaction) -> bool:
        action = self._action_for(itx)
        if action is None:
            return False
        card = self._registry.get_card(itx.target)
        channel = card.endpoints[0].channel
        payload = render(itx.message, channel)
        self._trace.add("RENDERED", interaction=itx.id, channel=channel.value,
                        content_kind=payload.content_kind.value)
        actor = card.endpoint_for(channel)
        if action[0] == "data":
            event = ChannelEvent(channel=channel, interaction_id=itx.id,
                                 actor=actor, text=action[1])
        else:
            ids = extract_action_ids(payload)
            index = {"approve": 0, "deny": 1}.get(action[0], None)
            if index is None:
                index = action[1]
            event = ChannelEvent(channel=channel, interaction_id=itx.id,
                                 actor=actor, action_id=ids[index])
        resp = normalize(event, itx, card)
        accepted = self._broker.deliver_response(resp)
        detail: dict[str, object] = {
            "interaction": itx.id, "kind": resp.kind.value, "accepted": accepted}
        if resp.kind is ResponseKind.DECISION:
            detail["decision"] = resp.decision.value
        elif resp.kind is ResponseKind.SELECTION:
            detail["selected_option"] = resp.selected_option
        elif resp.kind is ResponseKind.DATA:
            detail["data"] = resp.data
        self._trace.add("RESPONSE_DELIVERED", **detail)
        return accepted

    def answer_when_visible(self, interaction_id: str) -> threading.Thread:
        """Watch for the interaction and answer it from a separate thread,
        so sync permissions block the agent for real."""

        def run():
            itx = self._broker.get(interaction_id)
            self.respond(itx)

        t = threading.Thread(target=run, daemon=True)
        t.start()
        return t


def _digest(name: str) -> str:
    return hashlib.sha256(name.encode("utf-8")).hexdigest()[:12]


def run_case_study(mode: str = SCRIPTED, script: SimScript | None = None, *,
                   registry: CardRegistry | None = None,
                   broker: InteractionBroker | None = None,
                   response_timeout: float | None = None) -> TraceReport:
    """Run the scenario end to end and return the ordered trace.

    SCRIPTED mode answers through the scripted human and completes in
    milliseconds; INTERACTIVE mode blocks on real responses arriving via
    a shared broker (typically the service's). Raises ScenarioDivergence
    when the scenario cannot proceed (for example, no expert available).
    """
    if mode not in (SCRIPTED, INTERACTIVE):
        raise ValueError(f"unknown mode: {mode}")
    script = script or default_script()
    clock = SimClock()
    own_stack = broker is None
    if own_stack:
        registry = CardRegistry()
        broker = InteractionBroker(
            registry, clock=clock, id_factory=seeded_uuid_factory(script.seed))
    elif registry is None:
        raise ValueError("a shared broker needs its registry")
    if broker.all_interactions():
        raise ScenarioDivergence("setup", "broker state is not clean")

    trace = _Trace(clock)
    human = ScriptedHuman(registry, broker, script.human_policy, trace) \
        if mode == SCRIPTED else None
    cfg = EngineConfig(max_steps=script.max_steps)
    agent_id = "checkout-service-agent"
    hashes: list[str] = []
    expert: HumanId | None = None
    outcome = "resolved"

    card = script.expert_card or expert_card(script.expert_status)
    registry.register_card(card)
    trace.add("CARD_REGISTERED", id=card.id.canonical,
              tags=sorted(card.capability_values()), status=card.status.value)

    def execute(name: str, **detail) -> None:
        hashes.append(_digest(name))
        trace.add("ACTION_EXECUTED", name=name, **detail)
        clock.advance(1.0)

    def discover(tags: Sequence[str]) -> HumanId:
        query = DiscoveryQuery.of(*tags, status=AvailabilityStatus.AVAILABLE)
        result = registry.discover(query)
        trace.add("DISCOVERY", tags=sorted(tags), results=result.ids())
        if not result.entries:
            trace.add("DIVERGED", reason="no expert available")
            raise ScenarioDivergence("discovery", "no expert available")
        return result.cards()[0].id

    for step_index, step in enumerate(script.steps):
        proposal = ActionProposal(
            name=step.name, arguments=step.arguments,
            confidence=step.confidence, flags=step.flags)
        state = AgentState(
            agent_id=agent_id, step_count=step_index, max_steps=script.max_steps,
            next_action=proposal,
            recent_action_hashes=tuple(hashes[-cfg.loop_window:]))
        decision = decide(state, cfg)
        detail: dict[str, object] = {"value": decision.value.value, "action": step.name}
        if decision.trigger is not None:
            detail["trigger"] = decision.trigger.value
        trace.add("DECISION", **detail)

        if decision.value is DecisionKind.HALT:
            outcome = "halted"
            break
        if decision.value is DecisionKind.CONTINUE:
            execute(step.name, arguments=dict(step.arguments))
            if step.discover_tags:
                expert = discover(step.discover_tags)
            continue

        # REQUEST_HUMAN
        if expert is None:
            trace.add("DIVERGED", reason="no expert available")
            raise ScenarioDivergence(step.name, "no expert available")
        packet = build_intent_packet(state, decision.trigger, options=step.options)
        primitive, pattern = select_primitive(decision.trigger, state,
                                              urgent=step.urgent)
        checkpoint = None
        if pattern is Pattern.ASYNC:
            remaining = [s.name for s in script.steps[step_index:]]
            checkpoint = Checkpoint(
                version=1, interaction_id="",
                agent_state=state,
                opaque_context=canonical_dumps({"plan": remaining}).encode("utf-8"),
                created_at=clock())
        itx = broker.open_interaction(
            packet, primitive, pattern, expert, checkpoint=checkpoint,
            summary=step.summary, body=step.body, actions=step.actions)
        broker.mark_delivered(itx.id)
        trace.add("INTERACTION_OPENED", interaction=itx.id,
                  primitive=primitive.value, pattern=pattern.value,
                  summary=itx.message.summary)
        # Delivery renders into the inbox store (blocks document).
        inbox_payload = render(itx.message, Channel.SLACK)
        trace.add("RENDERED", interaction=itx.id, channel="inbox",
                  content_kind=inbox_payload.content_kind.value)

        if pattern is Pattern.ASYNC:
            broker.suspend_async(itx.id)
            trace.add("SUSPENDED", interaction=itx.id)
            if human is not None:
                human.respond(itx)
            event_id = broker.next_resume_event(timeout=response_timeout)
            if event_id is None:
                trace.add("DIVERGED", reason="no resume event")
                raise ScenarioDivergence(step.name, "no resume event arrived")
            restored, resp = broker.resume(event_id)
            resumed_detail: dict[str, object] = {
                "interaction": event_id,
                "restored_step": restored.agent_state.step_count,
                "response_kind": resp.kind.value,
            }
            if resp.kind is ResponseKind.SELECTION:
                resumed_detail["selected_option"] = resp.selected_option
            trace.add("RESUMED", **resumed_detail)
            if resp.kind is ResponseKind.SELECTION:
                execute(step.name, target=resp.selected_option)
            elif resp.kind is ResponseKind.DATA:
                execute(step.name, injected=resp.data)
            else:
                execute(step.name)
        else:
            trace.add("AWAITING", interaction=itx.id)
            watcher = human.answer_when_visible(itx.id) if human is not None else None
            try:
                resp = broker.await_sync(
                    itx.id,
                    timeout=response_timeout if response_timeout is not None
                    else 24 * 3600.0)
            except Timeout:
                trace.add("EXPIRED", interaction=itx.id)
                outcome = "expired"
                break
            finally:
                if watcher is not None:
                    watcher.join(timeout=10.0)
            if resp.kind is ResponseKind.DECISION and resp.decision is DecisionValue.APPROVED:
                trace.add("PERMISSION_RESOLVED", interaction=itx.id,
                          decision=resp.decision.value)
                execute(step.name, approved_by=expert.canonical)
            else:
                trace.add("PERMISSION_RESOLVED", interaction=itx.id,
                          decision=resp.decision.value if resp.decision else "NONE")
                trace.add("ACTION_ABORTED", name=step.name)
                outcome = "aborted"
                break

    trace.add("COMPLETED", outcome=outcome)
    trace.report.outcome = outcome
    return trace.report


# Feature rows for the efficacy comparison; each maps to a predicate over
# the trace plus the baseline behavior it replaces.
_FEATURES = (
    ("Addressing", "Manual (user must be in the chat loop)",
     "Dynamic discovery (finds expert via tags)"),
    ("Ambiguity", "Hallucinates a choice or loops",
     "Structured clarification (selection buttons)"),
    ("Presentation", "Raw text / JSON dumps",
     "Native UI payloads (buttons/forms)"),
    ("Safety", "No formal guardrails",
     "Formal permission gates (criticality trigger)"),
    ("Result", "High risk of error or stall",
     "Successful, safe resolution"),
)


def _feature_status(trace: TraceReport) -> list[tuple[str, str, str, str]]:
    def indices(entries: Iterable[TraceEntry]) -> str:
        idx = [str(e.index) for e in entries]
        return f" (steps {', '.join(idx)})" if idx else ""

    discovery = [e for e in trace.find("DISCOVERY") if e.detail.get("results")]
    # Selections arrive via the scripted human or (interactive) externally,
    # in which case the resume carries the evidence.
    clarification = (trace.find("RESPONSE_DELIVERED", kind="SELECTION")
                     or trace.find("RESUMED", response_kind="SELECTION"))
    rendered = trace.find("RENDERED")
    permission = trace.find("PERMISSION_RESOLVED")
    rows = []
    checks = [
        ("exhibited" if discovery else "not exercised", discovery),
        ("exhibited" if clarification else "not exercised", clarification),
        ("exhibited" if rendered else "not exercised", rendered),
        ("exhibited" if permission else "not exercised", permission),
    ]
    if trace.outcome == "resolved" and trace.entries:
        final = ("exhibited", trace.find("COMPLETED"))
    elif trace.outcome == "aborted":
        final = ("aborted safely", trace.find("ACTION_ABORTED"))
    elif not trace.entries:
        final = ("not exercised", [])
    else:
        final = ("not exercised", [])
    checks.append(final)
    for (feature, baseline, enabled), (status, entries) in zip(_FEATURES, checks):
        rows.append((feature, baseline, enabled, status + indices(entries)))
    return rows


def report(trace: TraceReport) -> str:
    """Two-column comparison of baseline-agent behavior against what this
    run exhibited, one row per protocol feature."""
    rows = _feature_status(trace)
    headers = ("Feature", "Baseline agent", "A2H-enabled agent", "This run")
    table = [headers] + [tuple(r) for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(4)]

    def fmt(row: tuple[str, str, str, str]) -> str:
        return " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()

    sep = "-+-".join("-" * w for w in widths)
    lines = [fmt(headers), sep] + [fmt(row) for row in rows]
    return "\n".join(lines) + "\n"
