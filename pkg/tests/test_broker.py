import http.server
import json
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest

from a2h.broker import (
    LEGAL_TRANSITIONS,
    Interaction,
    InteractionBroker,
    InteractionState,
)
from a2h.errors import (
    AlreadyClaimed,
    AlreadyResumed,
    KindMismatch,
    MissingCheckpoint,
    NotResolved,
    TargetNotFound,
    TargetOffline,
    Timeout,
    UnknownInteraction,
    WrongPattern,
    WrongResponder,
)
from a2h.model import (
    AvailabilityStatus,
    Checkpoint,
    DecisionValue,
    ExpectedInput,
    HumanResponse,
    IntentPacket,
    Pattern,
    PrimitiveType,
    RequiredInput,
    ResponseKind,
    parse_human_id,
    serialize_checkpoint,
)
from a2h.registry import CardRegistry
from a2h.wire import seeded_uuid_factory

from factories import make_agent_state, make_checkpoint
from test_registry import bob_card

BOB = parse_human_id("human://bob.sre")


class VirtualClock:
    def __init__(self, start: float = 1000.0):
        self._now = start
        self._lock = threading.Lock()

    def __call__(self) -> float:
        with self._lock:
            return self._now

    def advance(self, dt: float) -> None:
        with self._lock:
            self._now += dt


def make_broker(tmp_path=None, *, status=AvailabilityStatus.AVAILABLE,
                clock=None, seed=1):
    registry = CardRegistry()
    registry.register_card(bob_card(status=status))
    broker = InteractionBroker(
        registry,
        storage_dir=tmp_path,
        clock=clock or VirtualClock(),
        id_factory=seeded_uuid_factory(seed),
    )
    return registry, broker


def permission_packet() -> IntentPacket:
    return IntentPacket(
        reason="Criticality: proposed action is flagged REQUIRE_APPROVAL",
        context="Proposed action: kubectl rollout restart(target=checkout-service)",
        required_input=RequiredInput(kind=ExpectedInput.BOOLEAN),
    )


def clarification_packet() -> IntentPacket:
    return IntentPacket(
        reason="Ambiguity: two candidate config files",
        context="Multiple config files detected",
        required_input=RequiredInput(
            kind=ExpectedInput.SELECTION,
            options=("deployment.yaml (Production)", "deployment-canary.yaml (Canary)")),
    )


def solicitation_packet() -> IntentPacket:
    return IntentPacket(
        reason="Resource exhaustion: step budget reached",
        context="Agent is stuck in a loop",
        required_input=RequiredInput(kind=ExpectedInput.DATA),
    )


def notification_packet() -> IntentPacket:
    return IntentPacket(
        reason="Deployment finished",
        context="All pods are healthy",
        required_input=RequiredInput(kind=ExpectedInput.NONE),
    )


def open_sync_permission(broker, deadline=None):
    return broker.open_interaction(
        permission_packet(), PrimitiveType.PERMISSION, Pattern.SYNC, BOB,
        summary="Risk Alert: restart checkout-service",
        actions=("Approve Restart", "Deny"),
        deadline=deadline)


def open_async_clarification(broker, rng=None):
    rng = rng or random.Random(0)
    return broker.open_interaction(
        clarification_packet(), PrimitiveType.CLARIFICATION, Pattern.ASYNC, BOB,
        checkpoint=make_checkpoint(rng),
        summary="Ambiguous Configuration Target")


def approve(interaction_id: str, feedback=None) -> HumanResponse:
    return HumanResponse(
        interaction_id=interaction_id, human_id=BOB,
        kind=ResponseKind.DECISION, decision=DecisionValue.APPROVED,
        feedback=feedback)


class TestOpen:
    def test_permission_opens_pending_with_two_actions(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        assert itx.state is InteractionState.PENDING
        assert itx.message.actions == ("Approve Restart", "Deny")
        assert itx.primitive is PrimitiveType.PERMISSION

    def test_default_permission_actions(self):
        _, broker = make_broker()
        itx = broker.open_interaction(
            permission_packet(), PrimitiveType.PERMISSION, Pattern.SYNC, BOB)
        assert itx.message.actions == ("Approve", "Deny")

    def test_unknown_target(self):
        _, broker = make_broker()
        with pytest.raises(TargetNotFound):
            broker.open_interaction(
                permission_packet(), PrimitiveType.PERMISSION, Pattern.SYNC,
                parse_human_id("human://ghost"))

    def test_offline_target_rejects_blocking(self):
        _, broker = make_broker(status=AvailabilityStatus.OFFLINE)
        with pytest.raises(TargetOffline):
            open_sync_permission(broker)

    def test_offline_target_accepts_notification(self):
        # The offline rule applies only to blocking primitives.
        _, broker = make_broker(status=AvailabilityStatus.OFFLINE)
        itx = broker.open_interaction(
            notification_packet(), PrimitiveType.NOTIFICATION, Pattern.ASYNC, BOB)
        assert itx.state is InteractionState.PENDING

    def test_busy_target_is_deferred_annotation(self):
        _, broker = make_broker(status=AvailabilityStatus.BUSY)
        itx = open_sync_permission(broker)
        assert itx.deferred_delivery is True

    def test_async_blocking_without_checkpoint(self):
        _, broker = make_broker()
        with pytest.raises(MissingCheckpoint):
            broker.open_interaction(
                solicitation_packet(), PrimitiveType.SOLICITATION, Pattern.ASYNC, BOB)

    def test_packet_kind_must_match_primitive(self):
        _, broker = make_broker()
        with pytest.raises(KindMismatch):
            broker.open_interaction(
                permission_packet(), PrimitiveType.SOLICITATION, Pattern.ASYNC, BOB,
                checkpoint=make_checkpoint(random.Random(0)))

    def test_checkpoint_only_for_async_blocking(self):
        _, broker = make_broker()
        with pytest.raises(WrongPattern):
            broker.open_interaction(
                permission_packet(), PrimitiveType.PERMISSION, Pattern.SYNC, BOB,
                checkpoint=make_checkpoint(random.Random(0)))
        with pytest.raises(WrongPattern):
            broker.open_interaction(
                notification_packet(), PrimitiveType.NOTIFICATION, Pattern.ASYNC, BOB,
                checkpoint=make_checkpoint(random.Random(0)))

    def test_checkpoint_is_stamped_with_interaction_id(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        cp_doc = json.loads(itx.checkpoint_blob)
        assert cp_doc["interaction_id"] == itx.id


class TestAwaitSyncAndDeliver:
    def test_approve_within_timeout(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        broker.mark_delivered(itx.id)

        def respond():
            time.sleep(0.05)
            assert broker.deliver_response(approve(itx.id)) is True

        t = threading.Thread(target=respond)
        t.start()
        resp = broker.await_sync(itx.id, timeout=5.0)
        t.join()
        assert resp.decision is DecisionValue.APPROVED
        assert broker.get(itx.id).state is InteractionState.RESOLVED

    def test_timeout_expires_interaction(self):
        clock = VirtualClock()
        _, broker = make_broker(clock=clock)
        itx = open_sync_permission(broker)

        def tick():
            time.sleep(0.1)
            clock.advance(10.0)

        t = threading.Thread(target=tick)
        t.start()
        with pytest.raises(Timeout):
            broker.await_sync(itx.id, timeout=5.0)
        t.join()
        assert broker.get(itx.id).state is InteractionState.EXPIRED

    def test_await_wrong_pattern(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        with pytest.raises(WrongPattern):
            broker.await_sync(itx.id, timeout=0.1)

    def test_exactly_one_of_two_concurrent_awaiters_wins(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        results = []

        def wait_for_it():
            try:
                results.append(("resp", broker.await_sync(itx.id, timeout=5.0)))
            except AlreadyClaimed:
                results.append(("claimed", None))

        threads = [threading.Thread(target=wait_for_it) for _ in range(2)]
        for t in threads:
            t.start()
        time.sleep(0.15)  # both threads entered before the response
        broker.deliver_response(approve(itx.id))
        for t in threads:
            t.join()
        kinds = sorted(kind for kind, _ in results)
        assert kinds == ["claimed", "resp"]

    def test_response_before_await_is_claimed_immediately(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        broker.deliver_response(approve(itx.id))
        resp = broker.await_sync(itx.id, timeout=0.1)
        assert resp.decision is DecisionValue.APPROVED

    def test_duplicate_response_returns_false(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        assert broker.deliver_response(approve(itx.id)) is True
        assert broker.deliver_response(approve(itx.id)) is False
        assert broker.get(itx.id).response.decision is DecisionValue.APPROVED

    def test_phase2_selection_accepted(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        resp = HumanResponse(
            interaction_id=itx.id, human_id=BOB, kind=ResponseKind.SELECTION,
            selected_option="deployment.yaml (Production)")
        assert broker.deliver_response(resp) is True
        assert broker.get(itx.id).state is InteractionState.RESOLVED

    def test_kind_mismatch(self):
        # Oracle: the expected-response table keyed by primitive.
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        assert itx.primitive.expected_input is ExpectedInput.SELECTION
        with pytest.raises(KindMismatch):
            broker.deliver_response(approve(itx.id))

    def test_selection_outside_options_rejected(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        with pytest.raises(KindMismatch):
            broker.deliver_response(HumanResponse(
                interaction_id=itx.id, human_id=BOB, kind=ResponseKind.SELECTION,
                selected_option="nonexistent.yaml"))

    def test_wrong_responder(self):
        registry, broker = make_broker()
        from test_card import alice_card

        registry.register_card(alice_card())
        itx = open_sync_permission(broker)
        with pytest.raises(WrongResponder):
            broker.deliver_response(HumanResponse(
                interaction_id=itx.id,
                human_id=parse_human_id("human://alice.eng"),
                kind=ResponseKind.DECISION, decision=DecisionValue.APPROVED))

    def test_unknown_interaction(self):
        _, broker = make_broker()
        with pytest.raises(UnknownInteraction):
            broker.deliver_response(approve("00000000-0000-4000-8000-000000000000"))


class TestSuspendResume:
    def test_suspend_is_idempotent(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        assert broker.suspend_async(itx.id) is True
        assert broker.suspend_async(itx.id) is True

    def test_suspend_sync_wrong_pattern(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        with pytest.raises(WrongPattern):
            broker.suspend_async(itx.id)

    def test_resume_returns_checkpoint_and_response(self):
        rng = random.Random(3)
        _, broker = make_broker()
        cp = make_checkpoint(rng)
        itx = broker.open_interaction(
            solicitation_packet(), PrimitiveType.SOLICITATION, Pattern.ASYNC, BOB,
            checkpoint=cp)
        stored_blob = itx.checkpoint_blob
        broker.suspend_async(itx.id)
        broker.deliver_response(HumanResponse(
            interaction_id=itx.id, human_id=BOB, kind=ResponseKind.DATA,
            data="increase memory limit to 512Mi"))
        event = broker.next_resume_event(timeout=1.0)
        assert event == itx.id
        restored, resp = broker.resume(itx.id)
        # Byte comparison of the checkpoint before and after.
        assert serialize_checkpoint(restored) == stored_blob
        assert restored.agent_state == cp.agent_state
        assert resp.kind is ResponseKind.DATA

    def test_resume_while_pending(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        with pytest.raises(NotResolved):
            broker.resume(itx.id)

    def test_double_resume(self):
        _, broker = make_broker()
        itx = open_async_clarification(broker)
        broker.deliver_response(HumanResponse(
            interaction_id=itx.id, human_id=BOB, kind=ResponseKind.SELECTION,
            selected_option="deployment.yaml (Production)"))
        broker.resume(itx.id)
        with pytest.raises(AlreadyResumed):
            broker.resume(itx.id)

    def test_resume_sync_wrong_pattern(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        with pytest.raises(WrongPattern):
            broker.resume(itx.id)

    def test_suspend_survives_broker_restart(self, tmp_path):
        registry = CardRegistry()
        registry.register_card(bob_card())
        broker = InteractionBroker(registry, storage_dir=tmp_path,
                                   clock=VirtualClock(),
                                   id_factory=seeded_uuid_factory(5))
        itx = open_async_clarification(broker)
        broker.suspend_async(itx.id)
        blob_before = itx.checkpoint_blob

        # Simulated crash: new broker instance over the same journal.
        revived = InteractionBroker(registry, storage_dir=tmp_path,
                                    clock=VirtualClock())
        revived.deliver_response(HumanResponse(
            interaction_id=itx.id, human_id=BOB, kind=ResponseKind.SELECTION,
            selected_option="deployment.yaml (Production)"))
        assert revived.next_resume_event(timeout=1.0) == itx.id
        restored, resp = revived.resume(itx.id)
        assert serialize_checkpoint(restored) == blob_before
        assert resp.selected_option == "deployment.yaml (Production)"

    def test_resolved_unresumed_work_rearms_after_restart(self, tmp_path):
        registry = CardRegistry()
        registry.register_card(bob_card())
        broker = InteractionBroker(registry, storage_dir=tmp_path,
                                   clock=VirtualClock(),
                                   id_factory=seeded_uuid_factory(6))
        itx = open_async_clarification(broker)
        broker.deliver_response(HumanResponse(
            interaction_id=itx.id, human_id=BOB, kind=ResponseKind.SELECTION,
            selected_option="deployment.yaml (Production)"))
        revived = InteractionBroker(registry, storage_dir=tmp_path,
                                    clock=VirtualClock())
        assert revived.next_resume_event(timeout=1.0) == itx.id
        revived.resume(itx.id)


class TestNotification:
    def test_resolves_on_delivery_without_response(self):
        _, broker = make_broker()
        itx = broker.open_interaction(
            notification_packet(), PrimitiveType.NOTIFICATION, Pattern.ASYNC, BOB)
        broker.mark_delivered(itx.id)
        assert broker.get(itx.id).state is InteractionState.RESOLVED
        assert broker.get(itx.id).response is None

    def test_optional_ack_before_delivery(self):
        _, broker = make_broker()
        itx = broker.open_interaction(
            notification_packet(), PrimitiveType.NOTIFICATION, Pattern.ASYNC, BOB)
        ack = HumanResponse(interaction_id=itx.id, human_id=BOB, kind=ResponseKind.ACK)
        assert broker.deliver_response(ack) is True
        assert broker.get(itx.id).response.kind is ResponseKind.ACK


class TestExpiry:
    def test_only_overdue_expires(self):
        clock = VirtualClock(start=100.0)
        _, broker = make_broker(clock=clock)
        overdue = open_sync_permission(broker, deadline=150.0)
        future = open_sync_permission(broker, deadline=500.0)
        clock.advance(100.0)  # now 200
        expired = broker.expire_due()
        assert expired == [overdue.id]
        assert broker.get(overdue.id).state is InteractionState.EXPIRED
        assert broker.get(future.id).state is InteractionState.PENDING

    def test_idempotent(self):
        clock = VirtualClock(start=100.0)
        _, broker = make_broker(clock=clock)
        open_sync_permission(broker, deadline=150.0)
        clock.advance(100.0)
        assert len(broker.expire_due()) == 1
        assert broker.expire_due() == []

    def test_fuzz_matches_linear_scan(self):
        rng = random.Random(17)
        clock = VirtualClock(start=0.0)
        _, broker = make_broker(clock=clock)
        deadlines = {}
        for _ in range(40):
            deadline = rng.choice([None, rng.uniform(0, 100)])
            itx = open_sync_permission(broker, deadline=deadline)
            deadlines[itx.id] = deadline
        now = rng.uniform(0, 120)
        expected = sorted(
            iid for iid, d in deadlines.items() if d is not None and d <= now)
        assert broker.expire_due(now=now) == expected

    def test_expiry_wakes_sync_awaiter(self):
        clock = VirtualClock(start=100.0)
        _, broker = make_broker(clock=clock)
        itx = open_sync_permission(broker, deadline=150.0)
        caught = []

        def wait_for_it():
            try:
                broker.await_sync(itx.id, timeout=60.0)
            except Timeout:
                caught.append(True)

        t = threading.Thread(target=wait_for_it)
        t.start()
        time.sleep(0.1)
        clock.advance(51.0)
        broker.expire_due()
        t.join(timeout=5.0)
        assert caught == [True]


class TestCancel:
    def test_cancel_pending(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        assert broker.cancel(itx.id) is True
        assert broker.get(itx.id).state is InteractionState.CANCELLED
        assert broker.cancel(itx.id) is False

    def test_response_after_cancel_is_ignored(self):
        _, broker = make_broker()
        itx = open_sync_permission(broker)
        broker.cancel(itx.id)
        assert broker.deliver_response(approve(itx.id)) is False


class TestExactlyOnce:
    def test_concurrent_duplicate_storm(self):
        _, broker = make_broker()
        with ThreadPoolExecutor(max_workers=8) as pool:
            for _ in range(10):
                itx = open_sync_permission(broker)
                barrier = threading.Barrier(8)

                def hammer():
                    barrier.wait()
                    return broker.deliver_response(approve(itx.id))

                accepted = list(pool.map(lambda _: hammer(), range(8)))
                assert accepted.count(True) == 1


class TestStateMachineProperty:
    def test_random_operation_sequences_stay_legal(self):
        # Harness: drive random valid operations, observe every state
        # change, and assert each transition is in the legal set.
        rng = random.Random(23)
        for round_no in range(60):
            registry = CardRegistry()
            registry.register_card(bob_card())
            clock = VirtualClock()
            observed = []

            broker = InteractionBroker(
                registry, clock=clock, id_factory=seeded_uuid_factory(round_no),
                on_change=lambda i: observed.append((i.id, i.state)))

            opens = []
            for _ in range(rng.randint(1, 6)):
                kind = rng.choice(list(PrimitiveType))
                packet = {
                    PrimitiveType.PERMISSION: permission_packet,
                    PrimitiveType.CLARIFICATION: clarification_packet,
                    PrimitiveType.SOLICITATION: solicitation_packet,
                    PrimitiveType.NOTIFICATION: notification_packet,
                }[kind]()
                pattern = Pattern.ASYNC if kind is PrimitiveType.NOTIFICATION \
                    else rng.choice(list(Pattern))
                checkpoint = make_checkpoint(rng) \
                    if pattern is Pattern.ASYNC and kind is not PrimitiveType.NOTIFICATION \
                    else None
                deadline = clock() + rng.uniform(1, 50) if rng.random() < 0.5 else None
                itx = broker.open_interaction(
                    packet, kind, pattern, BOB, checkpoint=checkpoint,
                    deadline=deadline)
                opens.append(itx)

            for itx in opens:
                for _ in range(rng.randint(0, 4)):
                    action = rng.random()
                    try:
                        if action < 0.3:
                            broker.mark_delivered(itx.id)
                        elif action < 0.6:
                            kind = itx.primitive.expected_input
                            if kind is ExpectedInput.BOOLEAN:
                                broker.deliver_response(approve(itx.id))
                            elif kind is ExpectedInput.SELECTION:
                                broker.deliver_response(HumanResponse(
                                    interaction_id=itx.id, human_id=BOB,
                                    kind=ResponseKind.SELECTION,
                                    selected_option=itx.message.options[0]))
                            elif kind is ExpectedInput.DATA:
                                broker.deliver_response(HumanResponse(
                                    interaction_id=itx.id, human_id=BOB,
                                    kind=ResponseKind.DATA, data="info"))
                            else:
                                broker.deliver_response(HumanResponse(
                                    interaction_id=itx.id, human_id=BOB,
                                    kind=ResponseKind.ACK))
                        elif action < 0.75:
                            broker.cancel(itx.id)
                        elif action < 0.9:
                            clock.advance(rng.uniform(0, 30))
                            broker.expire_due()
                        else:
                            if itx.pattern is Pattern.ASYNC:
                                broker.suspend_async(itx.id)
                    except (KindMismatch, WrongPattern):
                        pass

            # Replay observed per-interaction state paths against the
            # legal transition table.
            paths: dict[str, list[InteractionState]] = {}
            for iid, state in observed:
                paths.setdefault(iid, [InteractionState.PENDING])
                if paths[iid][-1] is not state:
                    paths[iid].append(state)
            for iid, path in paths.items():
                for a, b in zip(path, path[1:]):
                    assert b in LEGAL_TRANSITIONS[a], f"{a} -> {b} on {iid}"


class TestWebhook:
    def test_resume_event_posts_to_registered_callback(self):
        received = []

        class Handler(http.server.BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                received.append(json.loads(self.rfile.read(length)))
                self.send_response(200)
                self.end_headers()

            def log_message(self, *args):
                pass

        server = http.server.HTTPServer(("127.0.0.1", 0), Handler)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            _, broker = make_broker()
            broker.register_callback(f"http://127.0.0.1:{server.server_port}/hook")
            itx = open_async_clarification(broker)
            broker.deliver_response(HumanResponse(
                interaction_id=itx.id, human_id=BOB, kind=ResponseKind.SELECTION,
                selected_option="deployment.yaml (Production)"))
            deadline = time.monotonic() + 5.0
            while not received and time.monotonic() < deadline:
                time.sleep(0.02)
            assert received == [{"interaction_id": itx.id}]
        finally:
            server.shutdown()


class TestInboxView:
    def test_pending_for_newest_first(self):
        clock = VirtualClock()
        _, broker = make_broker(clock=clock)
        first = open_sync_permission(broker)
        clock.advance(10)
        second = open_sync_permission(broker)
        pending = broker.pending_for(BOB)
        assert [i.id for i in pending] == [second.id, first.id]
        broker.deliver_response(approve(second.id))
        assert [i.id for i in broker.pending_for(BOB)] == [first.id]


class TestJournalRoundTrip:
    def test_interaction_wire_round_trip(self):
        rng = random.Random(29)
        _, broker = make_broker()
        itx = open_async_clarification(broker, rng)
        doc = itx.to_wire()
        again = Interaction.from_wire(doc)
        assert again.to_wire() == doc

    def test_full_state_survives_restart(self, tmp_path):
        registry = CardRegistry()
        registry.register_card(bob_card())
        clock = VirtualClock()
        broker = InteractionBroker(registry, storage_dir=tmp_path, clock=clock,
                                   id_factory=seeded_uuid_factory(31))
        a = open_sync_permission(broker, deadline=clock() + 5)
        b = broker.open_interaction(
            clarification_packet(), PrimitiveType.CLARIFICATION, Pattern.ASYNC, BOB,
            checkpoint=make_checkpoint(random.Random(0)),
            summary="Ambiguous Configuration Target", deadline=clock() + 5)
        broker.mark_delivered(a.id)
        broker.deliver_response(approve(a.id))
        broker.suspend_async(b.id)
        clock.advance(100)
        broker.expire_due()

        revived = InteractionBroker(registry, storage_dir=tmp_path, clock=clock)
        assert revived.get(a.id).state is InteractionState.RESOLVED
        assert revived.get(a.id).response.decision is DecisionValue.APPROVED
        assert revived.get(b.id).state is InteractionState.EXPIRED
        assert revived.get(b.id).suspended is True

    def test_snapshot_compaction(self, tmp_path):
        registry = CardRegistry()
        registry.register_card(bob_card())
        broker = InteractionBroker(registry, storage_dir=tmp_path,
                                   clock=VirtualClock(), snapshot_every=5,
                                   id_factory=seeded_uuid_factory(37))
        ids = [open_sync_permission(broker).id for _ in range(8)]
        assert (tmp_path / "broker.snapshot").exists()
        revived = InteractionBroker(registry, storage_dir=tmp_path,
                                    clock=VirtualClock(), snapshot_every=5)
        for iid in ids:
            assert revived.get(iid).state is InteractionState.PENDING
