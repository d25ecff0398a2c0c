import json

import pytest

from a2h.cli import main
from a2h.service import ServiceConfig, serve
from a2h.wire import canonical_dumps

from test_card import ALICE_WIRE
from test_registry import bob_card


@pytest.fixture(scope="module")
def handle():
    h = serve(ServiceConfig(bind="127.0.0.1:0"))
    yield h
    h.stop()


@pytest.fixture()
def url(handle):
    return handle.url


def run(url, *argv):
    return main(["--url", url, *argv])


def test_card_register_and_get(url, tmp_path, capsys):
    card_file = tmp_path / "alice.json"
    card_file.write_text(canonical_dumps(ALICE_WIRE))
    assert run(url, "card", "register", str(card_file)) == 0
    out = capsys.readouterr().out
    assert "human://alice.eng" in out

    assert run(url, "card", "get", "human://alice.eng") == 0
    out = capsys.readouterr().out
    assert "Senior Engineer" in out


def test_card_get_json_mode(url, tmp_path, capsys):
    card_file = tmp_path / "alice.json"
    card_file.write_text(canonical_dumps(ALICE_WIRE))
    run(url, "card", "register", str(card_file))
    capsys.readouterr()
    assert run(url, "--json", "card", "get", "alice.eng") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["profile"]["name"] == "Alice"


def test_unknown_card_exits_protocol_error(url, capsys):
    assert run(url, "card", "get", "human://nobody") == 4
    assert "NOT_FOUND" in capsys.readouterr().err


def test_discover_prints_bob(url, tmp_path, capsys):
    bob_file = tmp_path / "bob.json"
    bob_file.write_text(canonical_dumps(bob_card().to_wire()))
    run(url, "card", "register", str(bob_file))
    capsys.readouterr()
    assert run(url, "discover", "--tag", "kubernetes") == 0
    assert capsys.readouterr().out.strip() == "human://bob.sre"


def test_send_inbox_respond_flow(url, tmp_path, capsys):
    bob_file = tmp_path / "bob.json"
    bob_file.write_text(canonical_dumps(bob_card().to_wire()))
    run(url, "card", "register", str(bob_file))
    capsys.readouterr()

    assert run(url, "--json", "send", "--target", "human://bob.sre",
               "--type", "PERMISSION", "--summary", "Restart checkout-service",
               "--body", "needs approval") == 0
    sent = json.loads(capsys.readouterr().out)
    iid = sent["id"]

    assert run(url, "inbox", "bob.sre") == 0
    out = capsys.readouterr().out
    assert "Restart checkout-service" in out
    assert "\x1b[31m" in out  # permission renders red
    assert iid in out

    assert run(url, "respond", iid, "--approve") == 0
    assert "accepted" in capsys.readouterr().out

    assert run(url, "--json", "inbox", "bob.sre") == 0
    assert json.loads(capsys.readouterr().out)["entries"] == []

    record_ok = run(url, "--json", "send", "--target", "human://bob.sre",
                    "--type", "NOTIFICATION", "--summary", "deploy done")
    assert record_ok == 0


def test_respond_select(url, tmp_path, capsys):
    bob_file = tmp_path / "bob.json"
    bob_file.write_text(canonical_dumps(bob_card().to_wire()))
    run(url, "card", "register", str(bob_file))
    capsys.readouterr()

    from factories import make_checkpoint
    import random
    import requests

    body = {
        "target": "human://bob.sre", "type": "CLARIFICATION",
        "summary": "Pick a file",
        "options": ["deployment.yaml (Production)", "deployment-canary.yaml (Canary)"],
        "checkpoint": make_checkpoint(random.Random(0)).to_wire(),
    }
    r = requests.post(f"{url}/v1/interactions", data=canonical_dumps(body),
                      headers={"content-type": "application/json"})
    iid = r.json()["id"]

    assert run(url, "--json", "respond", iid, "--select", "1") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"accepted": True, "state": "RESOLVED"}

    r = requests.get(f"{url}/v1/interactions/{iid}")
    assert r.json()["response"]["selected_option"] == "deployment.yaml (Production)"


def test_duplicate_respond_reports_already_handled(url, tmp_path, capsys):
    bob_file = tmp_path / "bob.json"
    bob_file.write_text(canonical_dumps(bob_card().to_wire()))
    run(url, "card", "register", str(bob_file))
    run(url, "--json", "send", "--target", "human://bob.sre",
        "--type", "PERMISSION", "--summary", "again")
    iid = json.loads(capsys.readouterr().out.strip().splitlines()[-1])["id"]
    run(url, "respond", iid, "--approve")
    capsys.readouterr()
    assert run(url, "respond", iid, "--deny") == 0
    assert "already handled" in capsys.readouterr().out


def test_inbox_output_is_byte_stable(url, tmp_path, capsys):
    bob_file = tmp_path / "bob.json"
    bob_file.write_text(canonical_dumps(bob_card().to_wire()))
    run(url, "card", "register", str(bob_file))
    run(url, "--json", "send", "--target", "human://bob.sre",
        "--type", "SOLICITATION", "--pattern", "SYNC",
        "--summary", "Need the trace id", "--body", "please paste it")
    capsys.readouterr()

    run(url, "inbox", "bob.sre")
    first = capsys.readouterr().out
    run(url, "inbox", "bob.sre")
    second = capsys.readouterr().out
    assert first == second
    assert "\x1b[1m" in first

    # Clean up so later tests see an empty inbox.
    for line in first.splitlines():
        if "--data" in line:
            iid = line.split("respond ", 1)[1].split(" ")[0]
            run(url, "respond", iid, "--data", "trace-4711")
    capsys.readouterr()


def test_transport_error_exit_code(capsys):
    assert main(["--url", "http://127.0.0.1:9", "card", "get", "x"]) == 3
    assert "transport error" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["definitely-not-a-command"])
    assert err.value.code == 2


def test_demo_scripted(capsys):
    assert main(["demo"]) == 0
    out = capsys.readouterr().out
    assert "outcome: resolved" in out
    assert "APPROVED" in out
    assert "Dynamic discovery" in out


def test_demo_json(capsys):
    assert main(["--json", "demo", "--seed", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["outcome"] == "resolved"
