"""Operator CLI.

Talks to a running service (A2H_URL or --url) for card management,
discovery, sending and answering interactions; `demo` runs the scripted
case study fully in-process, or starts an embedded service and waits for
a real responder with --interactive.

Exit codes: 0 success, 2 usage error, 3 transport failure, 4 protocol
error (the machine-readable code is printed to stderr).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import requests

from .adapters import render
from .errors import A2HError, ScenarioDivergence
from .model import Channel, deserialize_message
from .wire import canonical_dumps

DEFAULT_URL = "http://127.0.0.1:8420"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TRANSPORT = 3
EXIT_PROTOCOL = 4


class ProtocolFailure(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class Client:
    def __init__(self, url: str):
        self.url = url.rstrip("/")

    def _check(self, response: requests.Response) -> dict:
        if response.status_code >= 400:
            try:
                doc = response.json()
                raise ProtocolFailure(doc.get("error", "HTTP_ERROR"),
                                      doc.get("message", response.text))
            except ValueError:
                raise ProtocolFailure("HTTP_ERROR",
                                      f"{response.status_code}: {response.text}")
        return response.json()

    def get(self, path: str, **params) -> dict:
        return self._check(requests.get(self.url + path, params=params or None,
                                        timeout=30))

    def post(self, path: str, doc: dict) -> dict:
        return self._check(requests.post(
            self.url + path, data=canonical_dumps(doc),
            headers={"content-type": "application/json"}, timeout=30))

    def put(self, path: str, doc: dict) -> dict:
        return self._check(requests.put(
            self.url + path, data=canonical_dumps(doc),
            headers={"content-type": "application/json"}, timeout=30))

    def delete(self, path: str) -> dict:
        return self._check(requests.delete(self.url + path, timeout=30))


def _bare_id(human_id: str) -> str:
    return human_id.removeprefix("human://")


def _emit(args, doc: dict, human_text: str | None = None) -> None:
    if args.json or human_text is None:
        print(canonical_dumps(doc))
    else:
        print(human_text)


# ----------------------------------------------------------------- commands

def cmd_card(args, client: Client) -> int:
    if args.card_cmd == "register":
        raw = sys.stdin.read() if args.file == "-" else Path(args.file).read_text()
        doc = client.post("/v1/cards", json.loads(raw))
        _emit(args, doc, f"registered {doc['id']} (revision {doc['revision']})")
    elif args.card_cmd == "get":
        doc = client.get(f"/v1/cards/{_bare_id(args.id)}")
        _emit(args, doc,
              f"{doc['id']}\n  name: {doc['profile']['name']}"
              f"\n  role: {doc['profile']['role']}"
              f"\n  timezone: {doc['profile']['timezone']}"
              f"\n  capabilities: {', '.join(doc['capabilities'])}"
              f"\n  endpoints: {', '.join(sorted(doc['endpoints']))}"
              f"\n  status: {doc['status']}")
    elif args.card_cmd == "status":
        doc = client.put(f"/v1/cards/{_bare_id(args.id)}/status",
                         {"status": args.status})
        _emit(args, doc, f"status set (revision {doc['revision']})")
    elif args.card_cmd == "rm":
        doc = client.delete(f"/v1/cards/{_bare_id(args.id)}")
        _emit(args, doc, "removed" if doc["removed"] else "not registered")
    return EXIT_OK


def cmd_discover(args, client: Client) -> int:
    doc = client.get("/v1/discover", tags=",".join(args.tag),
                     status=args.status, limit=args.limit)
    if args.json:
        print(canonical_dumps(doc))
    else:
        for entry in doc["results"]:
            print(entry["card"]["id"])
    return EXIT_OK


def cmd_send(args, client: Client) -> int:
    body = {
        "target": args.target,
        "type": args.type,
        "summary": args.summary,
        "body": args.body,
    }
    if args.pattern:
        body["pattern"] = args.pattern
    if args.option:
        body["options"] = args.option
    if args.action:
        body["actions"] = args.action
    if args.timeout_secs is not None:
        body["timeout_secs"] = args.timeout_secs
    doc = client.post("/v1/interactions", body)
    _emit(args, doc, f"opened {doc['id']} ({doc['state']})")
    return EXIT_OK


def cmd_inbox(args, client: Client) -> int:
    bare = _bare_id(args.human_id)
    doc = client.get(f"/v1/inbox/{bare}")
    if args.json:
        print(canonical_dumps(doc))
        return EXIT_OK
    entries = doc["entries"]
    if not entries:
        print("inbox empty")
        return EXIT_OK
    for entry in entries:
        record = client.get(f"/v1/interactions/{entry['interaction_id']}")
        message = deserialize_message(record["message"])
        payload = render(message, Channel.CLI)
        sys.stdout.write(payload.content)
        sys.stdout.write("\n")
    if args.watch:
        _watch_stream(client, bare)
    return EXIT_OK


def _watch_stream(client: Client, bare_id: str) -> None:
    with requests.get(f"{client.url}/v1/inbox/{bare_id}/stream",
                      stream=True, timeout=(10, None)) as response:
        for line in response.iter_lines():
            text = line.decode()
            if text.startswith("data:"):
                print(text[5:].strip())


def cmd_respond(args, client: Client) -> int:
    record = client.get(f"/v1/interactions/{args.interaction_id}")
    target = record["target"]
    card = client.get(f"/v1/cards/{_bare_id(target)}")
    # Impersonate the card's registered endpoint identity; responder
    # authentication is out of scope by design.
    channel, actor = sorted(card["endpoints"].items())[0]

    event: dict = {"channel": channel, "actor": actor}
    if args.data is not None:
        event["text"] = args.data
    elif args.select is not None:
        event["action_id"] = f"{args.interaction_id}#{args.select - 1}"
    elif args.approve and args.feedback:
        event["text"] = f"approve {args.feedback}"
    elif args.deny and args.feedback:
        event["text"] = f"deny {args.feedback}"
    elif args.approve:
        event["action_id"] = f"{args.interaction_id}#0"
    else:
        event["action_id"] = f"{args.interaction_id}#1"

    doc = client.post(f"/v1/interactions/{args.interaction_id}/response", event)
    if doc["accepted"]:
        _emit(args, doc, f"accepted ({doc['state']})")
    else:
        _emit(args, doc, "already handled" if doc.get("already_resolved")
              else f"not accepted ({doc['state']})")
    return EXIT_OK


def cmd_serve(args, _client: Client) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig.load(args.config) if args.config else ServiceConfig.load()
    if args.bind:
        config.bind = args.bind
    if args.data_dir:
        config.data_dir = args.data_dir
    if config.ui_dir is None:
        config.ui_dir = _find_ui_dir()
    handle = serve(config)
    print(f"service listening on {handle.url}")
    if config.ui_dir:
        print(f"inbox UI: {handle.url}/ui/")
    try:
        handle.wait()
    except KeyboardInterrupt:
        handle.stop()
    return EXIT_OK


def cmd_demo(args, client: Client) -> int:
    from .sim import INTERACTIVE, SCRIPTED, default_script, report, run_case_study

    if args.interactive:
        from .service import A2HService, ServiceConfig, serve

        ui_dir = _find_ui_dir()
        config = ServiceConfig(bind=args.bind, ui_dir=ui_dir)
        handle = serve(config)
        print(f"service listening on {handle.url}")
        if ui_dir:
            print(f"inbox UI: {handle.url}/ui/")
        print("answer from the inbox UI or: a2h respond <id> --approve")
        try:
            trace = run_case_study(
                INTERACTIVE,
                registry=handle.service.registry,
                broker=handle.service.broker)
        finally:
            handle.stop()
    else:
        trace = run_case_study(SCRIPTED, default_script(seed=args.seed))

    if args.json:
        print(trace.to_bytes().decode("utf-8"))
    else:
        sys.stdout.write(trace.to_text())
        sys.stdout.write("\n")
        sys.stdout.write(report(trace))
    return EXIT_OK


def _find_ui_dir() -> str | None:
    env = os.environ.get("A2H_UI_DIR")
    if env:
        return env if Path(env).is_dir() else None
    here = Path(__file__).resolve()
    for base in [Path.cwd(), *here.parents]:
        candidate = base / "frontend" / "dist"
        if candidate.is_dir():
            return str(candidate)
    return None


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a2h",
        description="Operator tool for the agent-to-human service.")
    parser.add_argument("--url", default=os.environ.get("A2H_URL", DEFAULT_URL),
                        help="service base URL (env A2H_URL)")
    parser.add_argument("--json", action="store_true",
                        help="print canonical wire documents instead of text")
    sub = parser.add_subparsers(dest="cmd", required=True)

    card = sub.add_parser("card", help="manage human cards")
    card_sub = card.add_subparsers(dest="card_cmd", required=True)
    register = card_sub.add_parser("register", help="register a card from a JSON file")
    register.add_argument("file", help="card document path, or - for stdin")
    get = card_sub.add_parser("get", help="fetch a card")
    get.add_argument("id")
    status = card_sub.add_parser("status", help="set availability")
    status.add_argument("id")
    status.add_argument("status", choices=["AVAILABLE", "BUSY", "OFFLINE"])
    rm = card_sub.add_parser("rm", help="deregister a card")
    rm.add_argument("id")

    discover = sub.add_parser("discover", help="find humans by capability tags")
    discover.add_argument("--tag", action="append", required=True)
    discover.add_argument("--status", default="AVAILABLE",
                          choices=["AVAILABLE", "BUSY", "OFFLINE", "ANY"])
    discover.add_argument("--limit", type=int, default=10)

    send = sub.add_parser("send", help="open an interaction")
    send.add_argument("--target", required=True)
    send.add_argument("--type", required=True,
                      choices=["PERMISSION", "CLARIFICATION", "SOLICITATION",
                               "NOTIFICATION"])
    send.add_argument("--summary", required=True)
    send.add_argument("--body", default="")
    send.add_argument("--pattern", choices=["SYNC", "ASYNC"])
    send.add_argument("--option", action="append",
                      help="selection option (repeat; CLARIFICATION)")
    send.add_argument("--action", action="append",
                      help="action label (repeat)")
    send.add_argument("--timeout-secs", type=float, dest="timeout_secs")

    inbox = sub.add_parser("inbox", help="show pending interactions for a human")
    inbox.add_argument("human_id")
    inbox.add_argument("--watch", action="store_true",
                       help="follow the live event stream")

    respond = sub.add_parser("respond", help="answer an interaction")
    respond.add_argument("interaction_id")
    group = respond.add_mutually_exclusive_group(required=True)
    group.add_argument("--approve", action="store_true")
    group.add_argument("--deny", action="store_true")
    group.add_argument("--select", type=int, metavar="N",
                       help="pick numbered option N (1-based)")
    group.add_argument("--data", help="free-text / data reply")
    respond.add_argument("--feedback", help="trailing note for approve/deny")

    serve_cmd = sub.add_parser("serve", help="run the HTTP service")
    serve_cmd.add_argument("--config", help="config file (canonical format)")
    serve_cmd.add_argument("--bind", help="host:port (overrides config)")
    serve_cmd.add_argument("--data-dir", dest="data_dir",
                           help="storage directory (overrides config)")

    demo = sub.add_parser("demo", help="run the scripted case study")
    demo.add_argument("--embedded", action="store_true",
                      help="run fully in-process (default)")
    demo.add_argument("--interactive", action="store_true",
                      help="start an embedded service and wait for real answers")
    demo.add_argument("--bind", default="127.0.0.1:8420",
                      help="bind address for --interactive")
    demo.add_argument("--seed", type=int, default=7)

    return parser


_HANDLERS = {
    "card": cmd_card,
    "discover": cmd_discover,
    "send": cmd_send,
    "inbox": cmd_inbox,
    "respond": cmd_respond,
    "serve": cmd_serve,
    "demo": cmd_demo,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    client = Client(args.url)
    try:
        return _HANDLERS[args.cmd](args, client)
    except (requests.ConnectionError, requests.Timeout) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except ProtocolFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PROTOCOL
    except ScenarioDivergence as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except A2HError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL


if __name__ == "__main__":
    sys.exit(main())
