"""Interaction broker: owns the lifecycle of agent-to-human requests.

The broker opens interactions from intent packets, enforces blocking
semantics, correlates the first valid response, and implements both
communication patterns:

  SYNC   the agent thread parks in ``await_sync`` until a response or
         timeout arrives (single consumer per interaction);
  ASYNC  the agent stores a checkpoint at open time, suspends, and is
         woken by a resume event (in-process queue, plus optional webhook
         callbacks) once a response lands; ``resume`` then returns the
         checkpoint byte-identical to what was stored.

State machine (terminal states in caps at the right):

    PENDING -> DELIVERED -> RESOLVED | EXPIRED | CANCELLED
    PENDING ------------->            EXPIRED | CANCELLED

A response arriving while PENDING proves delivery, so resolution always
passes through DELIVERED. NOTIFICATION interactions resolve on delivery;
their acknowledgment is optional. Expired permissions are fail-closed:
the awaiting agent sees TIMEOUT and must treat it as denial.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .errors import (
    AlreadyClaimed,
    AlreadyResumed,
    Cancelled,
    KindMismatch,
    MissingCheckpoint,
    NotResolved,
    SchemaViolation,
    TargetNotFound,
    TargetOffline,
    Timeout,
    UnknownInteraction,
    WrongPattern,
    WrongResponder,
)
from .model import (
    A2HMessage,
    AvailabilityStatus,
    Blocking,
    Checkpoint,
    HumanId,
    HumanResponse,
    IntentPacket,
    Pattern,
    PrimitiveType,
    ResponseKind,
    deserialize_message,
    kind_for_expected,
    restore_checkpoint,
    serialize_checkpoint,
)
from .registry import CardRegistry
from .storage import Journal
from .wire import check_fields, get_bool, get_int, get_number, get_str, new_uuid4

DEFAULT_SYNC_TIMEOUT = 300.0
_WAIT_SLICE = 0.05  # condition re-check interval while parked


class InteractionState(str, Enum):
    PENDING = "PENDING"
    DELIVERED = "DELIVERED"
    RESOLVED = "RESOLVED"
    EXPIRED = "EXPIRED"
    CANCELLED = "CANCELLED"


TERMINAL_STATES = frozenset(
    {InteractionState.RESOLVED, InteractionState.EXPIRED, InteractionState.CANCELLED})

LEGAL_TRANSITIONS: dict[InteractionState, frozenset[InteractionState]] = {
    InteractionState.PENDING: frozenset(
        {InteractionState.DELIVERED, InteractionState.EXPIRED, InteractionState.CANCELLED}),
    InteractionState.DELIVERED: frozenset(
        {InteractionState.RESOLVED, InteractionState.EXPIRED, InteractionState.CANCELLED}),
    InteractionState.RESOLVED: frozenset(),
    InteractionState.EXPIRED: frozenset(),
    InteractionState.CANCELLED: frozenset(),
}


@dataclass
class Interaction:
    """Broker-side record. Mutable only under the broker lock; callers get
    live references and must treat them as read-only."""

    id: str
    message: A2HMessage
    target: HumanId
    primitive: PrimitiveType
    pattern: Pattern
    state: InteractionState
    opened_at: float
    checkpoint_blob: bytes | None = None
    response: HumanResponse | None = None
    resolved_at: float | None = None
    deadline: float | None = None
    deferred_delivery: bool = False
    suspended: bool = False
    resumed: bool = False
    # transient, not persisted: the single sync consumer claim
    claimed: bool = False

    def to_wire(self) -> dict:
        return {
            "id": self.id,
            "message": self.message.to_wire(),
            "target": self.target.canonical,
            "primitive": self.primitive.value,
            "pattern": self.pattern.value,
            "state": self.state.value,
            "opened_at": self.opened_at,
            # The blob is canonical JSON text, so embedding it as a string
            # preserves byte identity across journal round-trips.
            "checkpoint": (self.checkpoint_blob.decode("utf-8")
                           if self.checkpoint_blob else None),
            "response": self.response.to_wire() if self.response else None,
            "resolved_at": self.resolved_at,
            "deadline": self.deadline,
            "deferred_delivery": self.deferred_delivery,
            "suspended": self.suspended,
            "resumed": self.resumed,
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "Interaction":
        check_fields(doc, required=(
            "id", "message", "target", "primitive", "pattern", "state",
            "opened_at", "checkpoint", "response", "resolved_at", "deadline",
            "deferred_delivery", "suspended", "resumed"))
        message = deserialize_message(doc["message"])
        response = None
        if doc["response"] is not None:
            response = HumanResponse.from_wire(doc["response"])
        checkpoint_blob = None
        if doc["checkpoint"] is not None:
            checkpoint_blob = get_str(doc, "checkpoint").encode("utf-8")
        return cls(
            id=get_str(doc, "id"),
            message=message,
            target=message.target,
            primitive=PrimitiveType(get_str(doc, "primitive")),
            pattern=Pattern(get_str(doc, "pattern")),
            state=InteractionState(get_str(doc, "state")),
            opened_at=get_number(doc, "opened_at"),
            checkpoint_blob=checkpoint_blob,
            response=response,
            resolved_at=None if doc["resolved_at"] is None else get_number(doc, "resolved_at"),
            deadline=None if doc["deadline"] is None else get_number(doc, "deadline"),
            deferred_delivery=get_bool(doc, "deferred_delivery"),
            suspended=get_bool(doc, "suspended"),
            resumed=get_bool(doc, "resumed"),
        )


_DEFAULT_ACTIONS: dict[PrimitiveType, tuple[str, ...]] = {
    PrimitiveType.PERMISSION: ("Approve", "Deny"),
    PrimitiveType.CLARIFICATION: (),
    PrimitiveType.SOLICITATION: (),
    PrimitiveType.NOTIFICATION: (),
}


class InteractionBroker:
    """Shared service; every operation may be called from any thread."""

    def __init__(self, registry: CardRegistry,
                 storage_dir: str | Path | None = None, *,
                 clock: Callable[[], float] = time.time,
                 id_factory: Callable[[], str] = new_uuid4,
                 sync_timeout: float = DEFAULT_SYNC_TIMEOUT,
                 snapshot_every: int = 256,
                 on_change: Callable[[Interaction], None] | None = None):
        self._registry = registry
        self._clock = clock
        self._id_factory = id_factory
        self._sync_timeout = sync_timeout
        self._on_change = on_change
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._interactions: dict[str, Interaction] = {}
        self._resume_events: deque[str] = deque()
        self._resume_cond = threading.Condition()
        self._callback_urls: list[str] = []
        self._journal: Journal | None = None
        if storage_dir is not None:
            self._journal = Journal(storage_dir, "broker", snapshot_every)
            self._replay()

    # -- persistence --------------------------------------------------------

    def _replay(self) -> None:
        assert self._journal is not None
        snapshot, entries = self._journal.load()
        if snapshot is not None:
            for doc in snapshot["interactions"]:
                itx = Interaction.from_wire(doc)
                self._interactions[itx.id] = itx
            self._callback_urls = list(snapshot.get("callbacks", []))
        for entry in entries:
            self._apply(entry)
        # Re-arm resume events for resolved-but-unconsumed async work so a
        # restart cannot strand a suspended agent (at-least-once events;
        # resume itself stays consume-once).
        for itx in self._interactions.values():
            if (itx.pattern is Pattern.ASYNC and itx.state is InteractionState.RESOLVED
                    and itx.checkpoint_blob is not None and not itx.resumed):
                self._resume_events.append(itx.id)

    def _apply(self, entry: Mapping[str, Any]) -> None:
        op = get_str(entry, "op")
        if op == "open":
            itx = Interaction.from_wire(entry["interaction"])
            self._interactions[itx.id] = itx
        elif op == "delivered":
            self._interactions[entry["id"]].state = InteractionState.DELIVERED
        elif op == "resolved":
            itx = self._interactions[entry["id"]]
            itx.state = InteractionState.RESOLVED
            itx.response = HumanResponse.from_wire(entry["response"]) if entry["response"] else None
            itx.resolved_at = entry["at"]
        elif op == "suspended":
            self._interactions[entry["id"]].suspended = True
        elif op == "expired":
            for key in entry["ids"]:
                self._interactions[key].state = InteractionState.EXPIRED
        elif op == "cancelled":
            self._interactions[entry["id"]].state = InteractionState.CANCELLED
        elif op == "resumed":
            self._interactions[entry["id"]].resumed = True
        elif op == "callback":
            if entry["url"] not in self._callback_urls:
                self._callback_urls.append(entry["url"])
        else:
            raise SchemaViolation("op", f"unknown broker op: {op}")

    def _journal_write(self, entry: dict) -> None:
        if self._journal is not None:
            self._journal.append(entry, state_dump=self._dump_state)

    def _dump_state(self) -> dict:
        return {
            "interactions": [self._interactions[k].to_wire()
                             for k in sorted(self._interactions)],
            "callbacks": list(self._callback_urls),
        }

    # -- helpers -------------------------------------------------------------

    def _get(self, interaction_id: str) -> Interaction:
        itx = self._interactions.get(interaction_id)
        if itx is None:
            raise UnknownInteraction(f"no interaction {interaction_id}")
        return itx

    def _transition(self, itx: Interaction, new_state: InteractionState) -> None:
        if new_state not in LEGAL_TRANSITIONS[itx.state]:
            raise RuntimeError(
                f"illegal transition {itx.state.value} -> {new_state.value}")
        itx.state = new_state

    def _notify_change(self, itx: Interaction) -> None:
        if self._on_change is not None:
            self._on_change(itx)

    def _emit_resume_event(self, itx: Interaction) -> None:
        if itx.checkpoint_blob is None:
            return  # nothing suspended on this interaction
        with self._resume_cond:
            self._resume_events.append(itx.id)
            self._resume_cond.notify_all()
        for url in list(self._callback_urls):
            threading.Thread(
                target=_post_callback, args=(url, itx.id), daemon=True).start()

    # -- operations ------------------------------------------------------------

    def open_interaction(self, packet: IntentPacket, primitive: PrimitiveType,
                         pattern: Pattern, target: HumanId,
                         checkpoint: Checkpoint | None = None, *,
                         summary: str | None = None, body: str | None = None,
                         actions: Iterable[str] | None = None,
                         deadline: float | None = None) -> Interaction:
        """Create a PENDING interaction from an intent packet.

        The target must resolve in the registry; OFFLINE targets reject
        blocking primitives, BUSY targets accept everything but the
        delivery is annotated as deferred. For ASYNC blocking primitives a
        checkpoint is mandatory and is durably stored (and stamped with
        the new interaction id) before the interaction becomes visible.

        ``summary``, ``body`` and ``actions`` default from the packet and
        the primitive (PERMISSION gets "Approve"/"Deny"); pass explicit
        values for human-facing phrasing.
        """
        try:
            card = self._registry.get_card(target)
        except Exception:
            raise TargetNotFound(f"no card for {target.canonical}")

        blocks = primitive.blocking is not Blocking.NONE
        if blocks and card.status is AvailabilityStatus.OFFLINE:
            raise TargetOffline(f"{target.canonical} is OFFLINE")
        needs_checkpoint = pattern is Pattern.ASYNC and blocks
        if needs_checkpoint and checkpoint is None:
            raise MissingCheckpoint(
                f"ASYNC {primitive.value} requires a checkpoint")
        if checkpoint is not None and not needs_checkpoint:
            raise WrongPattern(
                "a checkpoint only accompanies ASYNC blocking primitives")
        if packet.required_input.kind is not primitive.expected_input:
            raise KindMismatch(
                f"packet expects {packet.required_input.kind.value}, "
                f"{primitive.value} needs {primitive.expected_input.value}")

        interaction_id = self._id_factory()
        resolved_actions = tuple(actions) if actions is not None \
            else _DEFAULT_ACTIONS[primitive]
        message = A2HMessage(
            interaction_id=interaction_id,
            target=target,
            type=primitive,
            summary=summary if summary is not None else packet.reason.splitlines()[0][:200],
            body=body if body is not None else packet.context,
            actions=resolved_actions,
            options=packet.required_input.options,
            deadline=deadline,
            pattern=pattern,
        )

        blob = None
        if checkpoint is not None:
            blob = serialize_checkpoint(checkpoint.bound_to(interaction_id))

        with self._cond:
            itx = Interaction(
                id=interaction_id,
                message=message,
                target=target,
                primitive=primitive,
                pattern=pattern,
                state=InteractionState.PENDING,
                opened_at=self._clock(),
                checkpoint_blob=blob,
                deadline=deadline,
                deferred_delivery=card.status is AvailabilityStatus.BUSY,
            )
            # Durability before visibility: the lock is held until the journal
            # append returns, so no reader observes the interaction before its
            # checkpoint is on disk. The dict insert comes first so a snapshot
            # triggered by this append captures complete state.
            self._interactions[interaction_id] = itx
            self._journal_write({"op": "open", "interaction": itx.to_wire()})
            self._notify_change(itx)
            return itx

    def mark_delivered(self, interaction_id: str) -> Interaction:
        """Record that the rendering reached the target's inbox/channel.
        NOTIFICATION resolves immediately on delivery (ack optional)."""
        with self._cond:
            itx = self._get(interaction_id)
            if itx.state is InteractionState.PENDING:
                self._transition(itx, InteractionState.DELIVERED)
                self._journal_write({"op": "delivered", "id": itx.id})
                self._notify_change(itx)
                if itx.primitive is PrimitiveType.NOTIFICATION:
                    self._transition(itx, InteractionState.RESOLVED)
                    itx.resolved_at = self._clock()
                    self._journal_write({
                        "op": "resolved", "id": itx.id, "response": None,
                        "at": itx.resolved_at})
                    self._notify_change(itx)
                self._cond.notify_all()
            return itx

    def await_sync(self, interaction_id: str, timeout: float | None = None) -> HumanResponse:
        """Park until the response arrives; single consumer per interaction.

        Raises Timeout when the wait elapses (the interaction is then
        EXPIRED: fail-closed for permissions), AlreadyClaimed when another
        caller is already parked, Cancelled if the interaction is
        cancelled while waiting. A response that arrived before the call
        is claimed and returned immediately.
        """
        timeout = self._sync_timeout if timeout is None else timeout
        with self._cond:
            itx = self._get(interaction_id)
            if itx.pattern is not Pattern.SYNC:
                raise WrongPattern(f"{interaction_id} is not a SYNC interaction")
            if itx.claimed:
                raise AlreadyClaimed(f"{interaction_id} already has a waiting consumer")
            itx.claimed = True
            try:
                wait_deadline = self._clock() + timeout
                while True:
                    if itx.state is InteractionState.RESOLVED:
                        return itx.response
                    if itx.state is InteractionState.EXPIRED:
                        raise Timeout(f"{interaction_id} expired before a response")
                    if itx.state is InteractionState.CANCELLED:
                        raise Cancelled(f"{interaction_id} was cancelled")
                    now = self._clock()
                    if now >= wait_deadline:
                        self._expire_locked([itx])
                        raise Timeout(f"no response within {timeout:g}s")
                    # Short slices keep virtual-clock deadlines responsive;
                    # notify_all wakes us immediately on any state change.
                    self._cond.wait(min(_WAIT_SLICE, max(wait_deadline - now, 0.0)))
            finally:
                itx.claimed = False

    def suspend_async(self, interaction_id: str) -> bool:
        """Mark the agent suspended; everything needed to resume is already
        durable (the checkpoint was journaled at open). Idempotent."""
        with self._cond:
            itx = self._get(interaction_id)
            if itx.pattern is not Pattern.ASYNC:
                raise WrongPattern(f"{interaction_id} is not an ASYNC interaction")
            if not itx.suspended:
                itx.suspended = True
                self._journal_write({"op": "suspended", "id": itx.id})
            return True

    def deliver_response(self, resp: HumanResponse) -> bool:
        """Correlate a normalized response. The first valid response wins;
        duplicates and responses to terminal interactions return False
        without changing state. Invalid responses raise."""
        with self._cond:
            itx = self._get(resp.interaction_id)
            if itx.state in TERMINAL_STATES:
                return False
            if resp.human_id != itx.target:
                raise WrongResponder(
                    f"{resp.human_id.canonical} is not the target of {itx.id}")
            if not resp.kind.satisfies(itx.primitive.expected_input):
                raise KindMismatch(
                    f"{itx.primitive.value} expects "
                    f"{kind_for_expected(itx.primitive.expected_input).value}, "
                    f"got {resp.kind.value}")
            if (resp.kind is ResponseKind.SELECTION
                    and resp.selected_option not in itx.message.options):
                raise KindMismatch(
                    f"selected option is not one of the message options")

            if itx.state is InteractionState.PENDING:
                # A response proves the message reached the human.
                self._transition(itx, InteractionState.DELIVERED)
                self._journal_write({"op": "delivered", "id": itx.id})
                self._notify_change(itx)
            self._transition(itx, InteractionState.RESOLVED)
            itx.response = resp
            itx.resolved_at = self._clock()
            self._journal_write({
                "op": "resolved", "id": itx.id, "response": resp.to_wire(),
                "at": itx.resolved_at})
            if itx.pattern is Pattern.ASYNC:
                self._emit_resume_event(itx)
            self._cond.notify_all()
            self._notify_change(itx)
            return True

    def resume(self, interaction_id: str) -> tuple[Checkpoint, HumanResponse]:
        """Return the stored checkpoint (byte-identical to what was stored)
        and the response; consume-once."""
        with self._cond:
            itx = self._get(interaction_id)
            if itx.pattern is not Pattern.ASYNC:
                raise WrongPattern(f"{interaction_id} is not an ASYNC interaction")
            if itx.state is not InteractionState.RESOLVED:
                raise NotResolved(f"{interaction_id} is {itx.state.value}")
            if itx.resumed:
                raise AlreadyResumed(f"{interaction_id} was already resumed")
            if itx.checkpoint_blob is None:
                raise MissingCheckpoint(f"{interaction_id} has no checkpoint")
            itx.resumed = True
            self._journal_write({"op": "resumed", "id": itx.id})
            return restore_checkpoint(itx.checkpoint_blob), itx.response

    def expire_due(self, now: float | None = None) -> list[str]:
        """Expire every non-terminal interaction whose deadline has passed.
        Waiting sync consumers wake with Timeout. Returns ids ascending."""
        now = self._clock() if now is None else now
        with self._cond:
            due = [itx for itx in self._interactions.values()
                   if itx.state not in TERMINAL_STATES
                   and itx.deadline is not None and itx.deadline <= now]
            if due:
                self._expire_locked(sorted(due, key=lambda i: i.id))
            return sorted(itx.id for itx in due)

    def _expire_locked(self, due: list[Interaction]) -> None:
        for itx in due:
            self._transition(itx, InteractionState.EXPIRED)
        self._journal_write({"op": "expired", "ids": [itx.id for itx in due]})
        self._cond.notify_all()
        for itx in due:
            self._notify_change(itx)

    def cancel(self, interaction_id: str) -> bool:
        """Withdraw a non-terminal interaction; False if already terminal."""
        with self._cond:
            itx = self._get(interaction_id)
            if itx.state in TERMINAL_STATES:
                return False
            self._transition(itx, InteractionState.CANCELLED)
            self._journal_write({"op": "cancelled", "id": itx.id})
            self._cond.notify_all()
            self._notify_change(itx)
            return True

    # -- queries and events ------------------------------------------------------

    def get(self, interaction_id: str) -> Interaction:
        with self._lock:
            return self._get(interaction_id)

    def pending_for(self, target: HumanId) -> list[Interaction]:
        """Non-terminal interactions for one human, newest first."""
        with self._lock:
            mine = [itx for itx in self._interactions.values()
                    if itx.target == target and itx.state not in TERMINAL_STATES]
            mine.sort(key=lambda i: (-i.opened_at, i.id))
            return mine

    def all_interactions(self) -> list[Interaction]:
        with self._lock:
            return [self._interactions[k] for k in sorted(self._interactions)]

    def register_callback(self, url: str) -> None:
        """Resume events are also POSTed to this URL as {"interaction_id"}."""
        with self._lock:
            if url not in self._callback_urls:
                self._callback_urls.append(url)
                self._journal_write({"op": "callback", "url": url})

    def next_resume_event(self, timeout: float | None = None) -> str | None:
        """Consume one resume event; each event goes to exactly one worker."""
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._resume_cond:
            while not self._resume_events:
                remaining = None if deadline is None else deadline - time.monotonic()
                if remaining is not None and remaining <= 0:
                    return None
                self._resume_cond.wait(remaining if remaining is not None else None)
            return self._resume_events.popleft()


def _post_callback(url: str, interaction_id: str) -> None:
    try:
        import requests

        requests.post(url, json={"interaction_id": interaction_id}, timeout=5.0)
    except Exception:
        pass  # webhook delivery is best-effort; polling remains available
