"""HTTP/JSON surface over the registry, broker and inbox.

Thin adapters only: every endpoint parses the canonical wire format,
calls the owning module, and serializes its answer back, so API reads
always equal the in-process module's answer. Versioned paths:

    POST   /v1/cards                      register (upsert) a card
    GET    /v1/cards                      list registered cards
    GET    /v1/cards/{id}                 fetch one card
    DELETE /v1/cards/{id}                 deregister
    PUT    /v1/cards/{id}/status          set availability
    GET    /v1/discover?tags=a,b&status=AVAILABLE&limit=N
    POST   /v1/interactions               open (and deliver) an interaction
    GET    /v1/interactions/{id}          interaction record
    POST   /v1/interactions/{id}/response channel event in, resolution out
    GET    /v1/inbox/{human_id}           pending entries, newest first
    GET    /v1/inbox/{human_id}/stream    server-sent events on inbox changes
    POST   /v1/callbacks/register         agent resume webhooks

Card ids in paths may be given bare ("alice.eng") or with the scheme.
Configuration comes from an optional file plus environment overrides
(A2H_BIND, A2H_DATA_DIR, A2H_EPSILON, A2H_SYNC_TIMEOUT_SECS).
"""

from __future__ import annotations

import os
import queue
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

from fastapi import FastAPI, Request, Response
from fastapi.responses import StreamingResponse

from .adapters import ChannelEvent, RenderedPayload, normalize, render
from .broker import Interaction, InteractionBroker, InteractionState, TERMINAL_STATES
from .engine import EngineConfig
from .errors import (
    A2HError,
    BindFailure,
    MissingCheckpoint,
    NotFound,
    SchemaViolation,
)
from .model import (
    AvailabilityStatus,
    Channel,
    Checkpoint,
    ExpectedInput,
    HumanCard,
    HumanId,
    IntentPacket,
    Pattern,
    PrimitiveType,
    RequiredInput,
    parse_human_id,
)
from .registry import CardRegistry, DiscoveryQuery
from .wire import (
    canonical_dumps,
    canonical_loads,
    check_fields,
    get_number,
    get_object,
    get_str,
    get_str_list,
)

_STATUS_FOR_CODE = {
    "NOT_FOUND": 404,
    "TARGET_NOT_FOUND": 404,
    "UNKNOWN_INTERACTION": 404,
    "WRONG_RESPONDER": 403,
    "ACTOR_MISMATCH": 403,
    "ALREADY_CLAIMED": 409,
    "ALREADY_RESUMED": 409,
    "NOT_RESOLVED": 409,
    "TIMEOUT": 504,
}
_DEFAULT_ERROR_STATUS = 400

DEFAULT_BIND = "127.0.0.1:8420"


@dataclass
class ServiceConfig:
    bind: str = DEFAULT_BIND
    data_dir: str | None = None
    epsilon: float = 0.8
    sync_timeout: float = 300.0
    ui_dir: str | None = None

    @property
    def host(self) -> str:
        return self.bind.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.bind.rsplit(":", 1)[1])

    @classmethod
    def load(cls, path: str | Path | None = None,
             env: Mapping[str, str] | None = None) -> "ServiceConfig":
        """File first, then environment overrides."""
        env = os.environ if env is None else env
        cfg = cls()
        if path is not None:
            doc = canonical_loads(Path(path).read_text(encoding="utf-8"))
            check_fields(doc, required=(), optional=(
                "bind", "data_dir", "epsilon", "sync_timeout_secs", "ui_dir"))
            if "bind" in doc:
                cfg.bind = get_str(doc, "bind")
            if "data_dir" in doc:
                cfg.data_dir = get_str(doc, "data_dir")
            if "epsilon" in doc:
                cfg.epsilon = get_number(doc, "epsilon")
            if "sync_timeout_secs" in doc:
                cfg.sync_timeout = get_number(doc, "sync_timeout_secs")
            if "ui_dir" in doc:
                cfg.ui_dir = get_str(doc, "ui_dir")
        if env.get("A2H_BIND"):
            cfg.bind = env["A2H_BIND"]
        if env.get("A2H_DATA_DIR"):
            cfg.data_dir = env["A2H_DATA_DIR"]
        if env.get("A2H_EPSILON"):
            cfg.epsilon = float(env["A2H_EPSILON"])
        if env.get("A2H_SYNC_TIMEOUT_SECS"):
            cfg.sync_timeout = float(env["A2H_SYNC_TIMEOUT_SECS"])
        if env.get("A2H_UI_DIR"):
            cfg.ui_dir = env["A2H_UI_DIR"]
        return cfg


@dataclass(frozen=True)
class InboxEntry:
    """One pending interaction as a human sees it: the rendered card plus
    enough metadata to answer it."""

    interaction_id: str
    rendered: RenderedPayload
    primitive: PrimitiveType
    state: InteractionState
    opened_at: float

    def to_wire(self) -> dict:
        return {
            "interaction_id": self.interaction_id,
            "rendered": self.rendered.to_wire(),
            "primitive": self.primitive.value,
            "state": self.state.value,
            "opened_at": self.opened_at,
        }


class A2HService:
    """Bundles registry, broker and the inbox event fan-out."""

    def __init__(self, config: ServiceConfig | None = None, *,
                 registry: CardRegistry | None = None,
                 broker: InteractionBroker | None = None,
                 clock: Callable[[], float] = time.time):
        self.config = config or ServiceConfig()
        data_dir = self.config.data_dir
        self.engine_config = EngineConfig(epsilon=self.config.epsilon)
        self.registry = registry if registry is not None else CardRegistry(
            storage_dir=Path(data_dir) if data_dir else None)
        self._subscribers: dict[str, list[queue.Queue]] = {}
        self._sub_lock = threading.Lock()
        self.broker = broker if broker is not None else InteractionBroker(
            self.registry,
            storage_dir=Path(data_dir) if data_dir else None,
            clock=clock,
            sync_timeout=self.config.sync_timeout,
            on_change=self._fan_out,
        )

    # -- inbox -----------------------------------------------------------

    def inbox(self, human_id: HumanId) -> list[InboxEntry]:
        """Pending (non-terminal) interactions for one registered human,
        newest first, rendered as blocks documents for interactive UIs."""
        self.registry.get_card(human_id)  # NOT_FOUND for unknown humans
        return [
            InboxEntry(
                interaction_id=itx.id,
                rendered=render(itx.message, Channel.SLACK),
                primitive=itx.primitive,
                state=itx.state,
                opened_at=itx.opened_at,
            )
            for itx in self.broker.pending_for(human_id)
        ]

    def subscribe(self, human_id: HumanId) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._sub_lock:
            self._subscribers.setdefault(human_id.canonical, []).append(q)
        return q

    def unsubscribe(self, human_id: HumanId, q: queue.Queue) -> None:
        with self._sub_lock:
            subs = self._subscribers.get(human_id.canonical, [])
            if q in subs:
                subs.remove(q)

    def _fan_out(self, itx: Interaction) -> None:
        event = {
            "interaction_id": itx.id,
            "state": itx.state.value,
            "target": itx.target.canonical,
        }
        with self._sub_lock:
            for q in self._subscribers.get(itx.target.canonical, []):
                q.put(event)

    # -- interaction opening ------------------------------------------------

    def open_from_request(self, body: Mapping[str, Any]) -> Interaction:
        """Open an interaction from an API body and deliver it to the inbox."""
        check_fields(body, required=("target", "type"), optional=(
            "pattern", "summary", "body", "actions", "options", "deadline",
            "reason", "context", "checkpoint", "timeout_secs"))
        target = parse_human_id(get_str(body, "target"))
        try:
            primitive = PrimitiveType(get_str(body, "type"))
        except ValueError:
            raise SchemaViolation("type", f"unknown primitive: {body.get('type')}")

        if "pattern" in body:
            try:
                pattern = Pattern(get_str(body, "pattern"))
            except ValueError:
                raise SchemaViolation("pattern", f"unknown pattern: {body.get('pattern')}")
        else:
            pattern = Pattern.SYNC if primitive is PrimitiveType.PERMISSION \
                else Pattern.ASYNC

        summary = get_str(body, "summary") if "summary" in body else None
        text = get_str(body, "body") if "body" in body else None
        actions = tuple(get_str_list(body, "actions")) if "actions" in body else None
        options = tuple(get_str_list(body, "options")) if "options" in body else ()

        deadline = None
        if "deadline" in body:
            deadline = get_number(body, "deadline")
        elif "timeout_secs" in body:
            deadline = time.time() + get_number(body, "timeout_secs")

        reason = get_str(body, "reason") if "reason" in body \
            else (summary or f"{primitive.value} request")
        context = get_str(body, "context") if "context" in body \
            else (text or reason)
        packet = IntentPacket(
            reason=reason, context=context,
            required_input=RequiredInput(kind=primitive.expected_input,
                                         options=options if primitive.expected_input
                                         is ExpectedInput.SELECTION else ()))

        checkpoint = None
        if "checkpoint" in body and body["checkpoint"] is not None:
            checkpoint = Checkpoint.from_wire(get_object(body, "checkpoint"))

        itx = self.broker.open_interaction(
            packet, primitive, pattern, target, checkpoint=checkpoint,
            summary=summary, body=text, actions=actions, deadline=deadline)
        # Delivery is local: rendering lands in the inbox store immediately.
        return self.broker.mark_delivered(itx.id)

    def respond_from_event(self, interaction_id: str,
                           body: Mapping[str, Any]) -> dict:
        """Normalize a channel event against the interaction and deliver it."""
        itx = self.broker.get(interaction_id)
        event_doc = dict(body)
        event_doc.setdefault("interaction_id", interaction_id)
        event = ChannelEvent.from_wire(event_doc)
        card = self.registry.get_card(itx.target)
        if itx.state in TERMINAL_STATES:
            # Late or duplicate replies are not an error; report the state.
            return {"accepted": False, "state": itx.state.value,
                    "already_resolved": itx.state is InteractionState.RESOLVED}
        resp = normalize(event, itx, card)
        accepted = self.broker.deliver_response(resp)
        itx = self.broker.get(interaction_id)
        result = {"accepted": accepted, "state": itx.state.value}
        if not accepted:
            result["already_resolved"] = itx.state is InteractionState.RESOLVED
        return result


def _parse_path_id(raw: str) -> HumanId:
    """Path params carry the bare dotted form ('alice.eng'); the scheme
    cannot survive path routing, so clients strip it."""
    if not raw.startswith("human://"):
        raw = "human://" + raw
    return parse_human_id(raw)


def _json_response(payload: Any, status_code: int = 200) -> Response:
    return Response(content=canonical_dumps(payload) + "\n",
                    status_code=status_code, media_type="application/json")


def create_app(service: A2HService) -> FastAPI:
    app = FastAPI(title="a2h", version="0.1.0", docs_url=None, redoc_url=None)

    @app.exception_handler(A2HError)
    async def a2h_error_handler(_request: Request, exc: A2HError):
        status = _STATUS_FOR_CODE.get(exc.code, _DEFAULT_ERROR_STATUS)
        return _json_response(exc.to_wire(), status)

    async def read_body(request: Request) -> dict:
        raw = await request.body()
        doc = canonical_loads(raw)
        if not isinstance(doc, dict):
            raise SchemaViolation("$", "request body must be an object")
        return doc

    @app.get("/v1/healthz")
    async def healthz():
        return _json_response({"ok": True})

    # -- cards ------------------------------------------------------------

    @app.post("/v1/cards")
    async def register_card(request: Request):
        card = HumanCard.from_wire(await read_body(request))
        service.registry.register_card(card)
        return _json_response(
            {"id": card.id.canonical, "revision": service.registry.revision}, 201)

    @app.get("/v1/cards")
    async def list_cards():
        return _json_response(
            {"cards": [c.to_wire() for c in service.registry.all_cards()]})

    @app.get("/v1/cards/{card_id}")
    async def get_card(card_id: str):
        card = service.registry.get_card(_parse_path_id(card_id))
        return _json_response(card.to_wire())

    @app.delete("/v1/cards/{card_id}")
    async def deregister_card(card_id: str):
        removed = service.registry.deregister(_parse_path_id(card_id))
        return _json_response({"removed": removed})

    @app.put("/v1/cards/{card_id}/status")
    async def set_status(card_id: str, request: Request):
        body = await read_body(request)
        check_fields(body, required=("status",))
        try:
            status = AvailabilityStatus(get_str(body, "status"))
        except ValueError:
            raise SchemaViolation("status", f"unknown status: {body.get('status')}")
        revision = service.registry.set_status(_parse_path_id(card_id), status)
        return _json_response({"revision": revision})

    # -- discovery -----------------------------------------------------------

    @app.get("/v1/discover")
    async def discover(tags: str = "", status: str = "AVAILABLE", limit: int = 10):
        tag_values = [t for t in tags.split(",") if t.strip()]
        if not tag_values:
            raise SchemaViolation("tags", "at least one tag is required")
        if status == "ANY":
            wanted = None
        else:
            try:
                wanted = AvailabilityStatus(status)
            except ValueError:
                raise SchemaViolation("status", f"unknown status: {status}")
        try:
            query = DiscoveryQuery.of(*tag_values, status=wanted, limit=limit)
        except ValueError as exc:
            raise SchemaViolation("limit", str(exc))
        return _json_response(service.registry.discover(query).to_wire())

    # -- interactions -----------------------------------------------------------

    @app.post("/v1/interactions")
    async def open_interaction(request: Request):
        itx = service.open_from_request(await read_body(request))
        return _json_response(itx.to_wire(), 201)

    @app.get("/v1/interactions/{interaction_id}")
    async def get_interaction(interaction_id: str):
        return _json_response(service.broker.get(interaction_id).to_wire())

    @app.post("/v1/interactions/{interaction_id}/response")
    async def respond(interaction_id: str, request: Request):
        result = service.respond_from_event(interaction_id, await read_body(request))
        return _json_response(result)

    # -- inbox ---------------------------------------------------------------

    @app.get("/v1/inbox/{human_id}")
    async def inbox(human_id: str):
        entries = service.inbox(_parse_path_id(human_id))
        return _json_response({"entries": [e.to_wire() for e in entries]})

    @app.get("/v1/inbox/{human_id}/stream")
    def inbox_stream(human_id: str, keepalive: float = 15.0):
        hid = _parse_path_id(human_id)
        service.registry.get_card(hid)
        q = service.subscribe(hid)

        def gen() -> Iterator[str]:
            try:
                yield ": connected\n\n"
                while True:
                    try:
                        event = q.get(timeout=keepalive)
                    except queue.Empty:
                        yield ": keepalive\n\n"
                        continue
                    yield f"event: inbox\ndata: {canonical_dumps(event)}\n\n"
            finally:
                service.unsubscribe(hid, q)

        return StreamingResponse(gen(), media_type="text/event-stream")

    # -- callbacks -----------------------------------------------------------------

    @app.post("/v1/callbacks/register")
    async def register_callback(request: Request):
        body = await read_body(request)
        check_fields(body, required=("url",))
        service.broker.register_callback(get_str(body, "url"))
        return _json_response({"registered": True})

    ui_dir = service.config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


class ServiceHandle:
    """A running uvicorn server on its own thread."""

    def __init__(self, service: A2HService, server, thread: threading.Thread,
                 host: str, port: int):
        self.service = service
        self._server = server
        self._thread = thread
        self.host = host
        self.port = port

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def wait(self) -> None:
        """Block until the server thread exits."""
        self._thread.join()

    def stop(self, timeout: float = 10.0) -> None:
        """Graceful shutdown; in-flight requests complete first."""
        self._server.should_exit = True
        self._thread.join(timeout=timeout)


def serve(config: ServiceConfig | None = None, *,
          service: A2HService | None = None) -> ServiceHandle:
    """Start the HTTP service; returns once the socket is accepting."""
    import uvicorn

    config = config or ServiceConfig()
    service = service or A2HService(config)
    app = create_app(service)

    host, port = config.host, config.port
    # Bind the socket ourselves: port 0 resolves to a real ephemeral port
    # and bind errors surface before the server thread starts.
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen(128)
    except OSError as exc:
        raise BindFailure(f"cannot bind {host}:{port}: {exc}")
    port = sock.getsockname()[1]

    server = uvicorn.Server(uvicorn.Config(
        app, log_level="warning", lifespan="off"))
    thread = threading.Thread(
        target=server.run, kwargs={"sockets": [sock]}, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10.0
    while not server.started and time.monotonic() < deadline:
        if not thread.is_alive():
            raise BindFailure(f"server failed to start on {host}:{port}")
        time.sleep(0.01)
    if not server.started:
        raise BindFailure("server did not start within 10s")
    return ServiceHandle(service, server, thread, host, port)
