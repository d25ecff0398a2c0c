import json
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor

import pytest
import requests

from a2h.broker import InteractionState
from a2h.model import AvailabilityStatus, Channel, PrimitiveType, parse_human_id
from a2h.registry import DiscoveryQuery
from a2h.service import A2HService, ServiceConfig, serve
from a2h.wire import canonical_dumps

from factories import make_card
from test_card import ALICE_WIRE, alice_card
from test_registry import bob_card, brute_force_discover

BOB = parse_human_id("human://bob.sre")


@pytest.fixture()
def handle(tmp_path):
    cfg = ServiceConfig(bind="127.0.0.1:0", data_dir=str(tmp_path / "data"))
    h = serve(cfg)
    yield h
    h.stop()


def post_json(url, doc, **kw):
    return requests.post(url, data=canonical_dumps(doc),
                         headers={"content-type": "application/json"}, **kw)


def put_json(url, doc):
    return requests.put(url, data=canonical_dumps(doc),
                        headers={"content-type": "application/json"})


def open_permission(handle, deadline=None):
    body = {
        "target": "human://bob.sre",
        "type": "PERMISSION",
        "pattern": "SYNC",
        "summary": "Risk Alert: restart checkout-service",
        "body": "Restart requires approval",
        "actions": ["Approve Restart", "Deny"],
    }
    if deadline is not None:
        body["deadline"] = deadline
    r = post_json(f"{handle.url}/v1/interactions", body)
    assert r.status_code == 201, r.text
    return r.json()


class TestCards:
    def test_register_then_get(self, handle):
        r = post_json(f"{handle.url}/v1/cards", ALICE_WIRE)
        assert r.status_code == 201
        assert r.json()["id"] == "human://alice.eng"

        got = requests.get(f"{handle.url}/v1/cards/alice.eng")
        assert got.status_code == 200
        assert got.json() == alice_card().to_wire()

    def test_path_ids_use_bare_dotted_form(self, handle):
        # Scheme slashes cannot survive path routing; clients strip it.
        post_json(f"{handle.url}/v1/cards", ALICE_WIRE)
        got = requests.get(f"{handle.url}/v1/cards/alice.eng")
        assert got.status_code == 200
        assert got.json()["id"] == "human://alice.eng"

    def test_unknown_card_404(self, handle):
        r = requests.get(f"{handle.url}/v1/cards/nobody")
        assert r.status_code == 404
        assert r.json()["error"] == "NOT_FOUND"

    def test_invalid_card_rejected_without_mutation(self, handle):
        bad = dict(ALICE_WIRE)
        bad["endpoints"] = {}
        r = post_json(f"{handle.url}/v1/cards", bad)
        assert r.status_code == 400
        assert r.json()["error"] == "INVALID_CARD"
        assert handle.service.registry.all_cards() == []

    def test_malformed_body_never_mutates(self, handle):
        r = requests.post(f"{handle.url}/v1/cards", data=b"not json {",
                          headers={"content-type": "application/json"})
        assert r.status_code == 400
        assert handle.service.registry.all_cards() == []

    def test_status_and_delete(self, handle):
        post_json(f"{handle.url}/v1/cards", ALICE_WIRE)
        r = put_json(f"{handle.url}/v1/cards/alice.eng/status", {"status": "BUSY"})
        assert r.status_code == 200
        assert r.json()["revision"] == 2
        assert requests.get(f"{handle.url}/v1/cards/alice.eng").json()["status"] == "BUSY"
        assert requests.delete(f"{handle.url}/v1/cards/alice.eng").json()["removed"] is True
        assert requests.get(f"{handle.url}/v1/cards/alice.eng").status_code == 404

    def test_list_cards(self, handle):
        post_json(f"{handle.url}/v1/cards", ALICE_WIRE)
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        ids = [c["id"] for c in requests.get(f"{handle.url}/v1/cards").json()["cards"]]
        assert ids == ["human://alice.eng", "human://bob.sre"]


class TestDiscover:
    def test_finds_bob(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        r = requests.get(f"{handle.url}/v1/discover",
                         params={"tags": "kubernetes", "status": "AVAILABLE"})
        assert [e["card"]["id"] for e in r.json()["results"]] == ["human://bob.sre"]

    def test_requires_tags(self, handle):
        assert requests.get(f"{handle.url}/v1/discover").status_code == 400

    def test_concurrent_discovers_match_oracle(self, handle):
        rng = random.Random(55)
        cards = {}
        for _ in range(60):
            card = make_card(rng)
            cards[card.id.canonical] = card
            assert post_json(f"{handle.url}/v1/cards", card.to_wire()).status_code == 201

        query = DiscoveryQuery.of("python", status=None, limit=100)
        expected = brute_force_discover(cards.values(), query).to_wire()

        def hit(_):
            r = requests.get(f"{handle.url}/v1/discover",
                             params={"tags": "python", "status": "ANY", "limit": 100})
            return r.json()

        with ThreadPoolExecutor(max_workers=8) as pool:
            results = list(pool.map(hit, range(50)))
        assert all(res == expected for res in results)


class TestInteractions:
    def test_open_and_get(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        doc = open_permission(handle)
        assert doc["state"] == "DELIVERED"
        got = requests.get(f"{handle.url}/v1/interactions/{doc['id']}")
        assert got.json() == doc

    def test_unknown_interaction_404(self, handle):
        r = requests.get(
            f"{handle.url}/v1/interactions/00000000-0000-4000-8000-000000000000")
        assert r.status_code == 404
        assert r.json()["error"] == "UNKNOWN_INTERACTION"

    def test_respond_via_channel_event(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        doc = open_permission(handle)
        event = {
            "channel": "slack",
            "actor": "slack_webhook_bob",
            "action_id": f"{doc['id']}#0",
        }
        r = post_json(f"{handle.url}/v1/interactions/{doc['id']}/response", event)
        assert r.json() == {"accepted": True, "state": "RESOLVED"}
        record = requests.get(f"{handle.url}/v1/interactions/{doc['id']}").json()
        assert record["response"]["decision"] == "APPROVED"

    def test_duplicate_response_is_not_an_error(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        doc = open_permission(handle)
        event = {"channel": "slack", "actor": "slack_webhook_bob",
                 "action_id": f"{doc['id']}#0"}
        post_json(f"{handle.url}/v1/interactions/{doc['id']}/response", event)
        r = post_json(f"{handle.url}/v1/interactions/{doc['id']}/response", event)
        assert r.status_code == 200
        assert r.json()["accepted"] is False
        assert r.json()["already_resolved"] is True

    def test_kind_mismatch_surfaces(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        doc = open_permission(handle)
        event = {"channel": "slack", "actor": "slack_webhook_bob",
                 "text": "what does this mean?"}
        r = post_json(f"{handle.url}/v1/interactions/{doc['id']}/response", event)
        assert r.status_code == 400
        assert r.json()["error"] == "UNPARSEABLE_REPLY"

    def test_wrong_actor_403(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        doc = open_permission(handle)
        event = {"channel": "slack", "actor": "intruder",
                 "action_id": f"{doc['id']}#0"}
        r = post_json(f"{handle.url}/v1/interactions/{doc['id']}/response", event)
        assert r.status_code == 403
        assert r.json()["error"] == "ACTOR_MISMATCH"

    def test_async_needs_checkpoint(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        r = post_json(f"{handle.url}/v1/interactions", {
            "target": "human://bob.sre", "type": "SOLICITATION",
            "summary": "Need the API key", "body": "please"})
        assert r.status_code == 400
        assert r.json()["error"] == "MISSING_CHECKPOINT"


class TestInbox:
    def test_clarification_appears_then_clears(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        from factories import make_checkpoint

        rng = random.Random(1)
        r = post_json(f"{handle.url}/v1/interactions", {
            "target": "human://bob.sre",
            "type": "CLARIFICATION",
            "summary": "Ambiguous Configuration Target",
            "body": "Which one should I patch?",
            "options": ["deployment.yaml (Production)",
                        "deployment-canary.yaml (Canary)"],
            "checkpoint": make_checkpoint(rng).to_wire(),
        })
        assert r.status_code == 201, r.text
        iid = r.json()["id"]

        inbox = requests.get(f"{handle.url}/v1/inbox/bob.sre").json()["entries"]
        assert len(inbox) == 1
        assert inbox[0]["primitive"] == "CLARIFICATION"
        assert inbox[0]["rendered"]["content_kind"] == "BLOCKS_DOC"

        event = {"channel": "slack", "actor": "slack_webhook_bob",
                 "action_id": f"{iid}#0"}
        post_json(f"{handle.url}/v1/interactions/{iid}/response", event)
        assert requests.get(f"{handle.url}/v1/inbox/bob.sre").json()["entries"] == []

    def test_inbox_unknown_human_404(self, handle):
        assert requests.get(f"{handle.url}/v1/inbox/ghost").status_code == 404

    def test_api_equals_in_process_answer(self, handle):
        # Thin-adapter property: both paths give identical documents.
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        open_permission(handle)
        api = requests.get(f"{handle.url}/v1/inbox/bob.sre").json()["entries"]
        direct = [e.to_wire() for e in handle.service.inbox(BOB)]
        assert api == direct

        api_card = requests.get(f"{handle.url}/v1/cards/bob.sre").json()
        assert api_card == handle.service.registry.get_card(BOB).to_wire()

    def test_stream_emits_inbox_events(self, handle):
        post_json(f"{handle.url}/v1/cards", bob_card().to_wire())
        events = []
        ready = threading.Event()

        def listen():
            with requests.get(
                    f"{handle.url}/v1/inbox/bob.sre/stream",
                    params={"keepalive": 1}, stream=True, timeout=10) as r:
                ready.set()
                for line in r.iter_lines():
                    line = line.decode()
                    if line.startswith("data:"):
                        events.append(json.loads(line[5:]))
                        if len(events) >= 2:
                            return

        t = threading.Thread(target=listen, daemon=True)
        t.start()
        assert ready.wait(5.0)
        time.sleep(0.2)  # let the subscriber attach before opening
        doc = open_permission(handle)
        t.join(timeout=10.0)
        assert len(events) >= 2
        assert events[0]["interaction_id"] == doc["id"]
        assert [e["state"] for e in events[:2]] == ["PENDING", "DELIVERED"]


class TestConfigAndCallbacks:
    def test_env_overrides(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text('{"bind":"127.0.0.1:7000","epsilon":0.5}')
        cfg = ServiceConfig.load(cfg_file, env={
            "A2H_BIND": "127.0.0.1:7001",
            "A2H_EPSILON": "0.9",
            "A2H_SYNC_TIMEOUT_SECS": "12",
        })
        assert cfg.bind == "127.0.0.1:7001"
        assert cfg.epsilon == 0.9
        assert cfg.sync_timeout == 12.0

    def test_register_callback_endpoint(self, handle):
        r = post_json(f"{handle.url}/v1/callbacks/register",
                      {"url": "http://127.0.0.1:9/hook"})
        assert r.json()["registered"] is True

    def test_storage_survives_service_restart(self, tmp_path):
        data = tmp_path / "data"
        cfg = ServiceConfig(bind="127.0.0.1:0", data_dir=str(data))
        h = serve(cfg)
        try:
            post_json(f"{h.url}/v1/cards", bob_card().to_wire())
            open_permission(h)
        finally:
            h.stop()

        h2 = serve(ServiceConfig(bind="127.0.0.1:0", data_dir=str(data)))
        try:
            inbox = requests.get(f"{h2.url}/v1/inbox/bob.sre").json()["entries"]
            assert len(inbox) == 1
        finally:
            h2.stop()

    def test_bind_failure(self, handle):
        from a2h.errors import BindFailure

        with pytest.raises(BindFailure):
            serve(ServiceConfig(bind=f"127.0.0.1:{handle.port}"))
