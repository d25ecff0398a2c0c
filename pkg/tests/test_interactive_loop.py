"""End-to-end interactive loop: the agent blocks on the real service while
responses arrive over HTTP exactly as the inbox UI sends them."""

import threading
import time

import pytest
import requests

from a2h.service import ServiceConfig, serve
from a2h.sim import INTERACTIVE, PRODUCTION_OPTION, run_case_study
from a2h.wire import canonical_dumps


def post_json(url, doc):
    return requests.post(url, data=canonical_dumps(doc),
                         headers={"content-type": "application/json"}, timeout=10)


def wait_for_inbox(url, *, primitive, timeout=5.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        entries = requests.get(f"{url}/v1/inbox/bob.sre", timeout=10).json()["entries"]
        wanted = [e for e in entries if e["primitive"] == primitive]
        if wanted:
            return wanted[0], time.monotonic()
        time.sleep(0.05)
    raise AssertionError(f"no {primitive} entry within {timeout}s")


def ui_click(url, entry, index):
    """Exactly what the browser inbox sends: the card's channel identity
    plus the clicked button's action id."""
    card = requests.get(f"{url}/v1/cards/bob.sre", timeout=10).json()
    channel, actor = sorted(card["endpoints"].items())[0]
    iid = entry["interaction_id"]
    buttons = [el for block in entry["rendered"]["content"]["blocks"]
               if block["type"] == "actions" for el in block["elements"]]
    return post_json(f"{url}/v1/interactions/{iid}/response", {
        "channel": channel, "actor": actor,
        "action_id": buttons[index]["action_id"]})


def test_interactive_demo_loop_via_http():
    handle = serve(ServiceConfig(bind="127.0.0.1:0"))
    url = handle.url
    result = {}

    def agent():
        result["trace"] = run_case_study(
            INTERACTIVE,
            registry=handle.service.registry,
            broker=handle.service.broker,
            response_timeout=30.0)

    thread = threading.Thread(target=agent, daemon=True)
    thread.start()
    try:
        # The UI's dropdown source lists the registered card.
        deadline = time.monotonic() + 5.0
        cards = []
        while time.monotonic() < deadline and not cards:
            cards = requests.get(f"{url}/v1/cards", timeout=10).json()["cards"]
            time.sleep(0.02)
        assert [c["id"] for c in cards] == ["human://bob.sre"]

        # Phase 2: the clarification card shows exactly the two option
        # labels, in message order.
        clar, _ = wait_for_inbox(url, primitive="CLARIFICATION")
        buttons = [el for block in clar["rendered"]["content"]["blocks"]
                   if block["type"] == "actions" for el in block["elements"]]
        assert [b["text"]["text"] for b in buttons] == [
            "deployment.yaml (Production)", "deployment-canary.yaml (Canary)"]
        opened_at = time.monotonic()
        assert ui_click(url, clar, 0).json()["accepted"] is True

        # Phase 3: the permission appears promptly after the agent resumes.
        perm, seen_at = wait_for_inbox(url, primitive="PERMISSION")
        assert seen_at - opened_at < 2.0, "permission took too long to appear"
        first = ui_click(url, perm, 0)
        assert first.json() == {"accepted": True, "state": "RESOLVED"}

        # A second click on the already-resolved card is a non-error notice.
        second = ui_click(url, perm, 0)
        assert second.status_code == 200
        assert second.json()["accepted"] is False
        assert second.json()["already_resolved"] is True

        thread.join(timeout=20.0)
        assert not thread.is_alive(), "agent did not unblock after approval"
        trace = result["trace"]
        assert trace.outcome == "resolved"
        clar_resp = trace.find("RESUMED")
        assert clar_resp, "agent never resumed from the clarification"
        executed = trace.executed_actions()
        assert executed[-1].detail["name"] == "kubectl rollout restart"
        patches = trace.find("ACTION_EXECUTED", name="patch_config")
        assert patches[0].detail["target"] == PRODUCTION_OPTION
    finally:
        thread.join(timeout=1.0)
        handle.stop()
