"""Unified messaging adapters: render messages per channel, normalize replies.

Rendering is a pure function of (message, channel) and byte-deterministic.
Every clickable control carries an action id of the form
``<interaction_id>#<index>`` so a reply can be normalized statelessly:
the index keys into the message's buttons, whose values are the response
payloads (approve/deny for PERMISSION, the option string for
CLARIFICATION, the quick-reply label for SOLICITATION).

Channel targets:

    SLACK, TEAMS   structured blocks document (header, section, buttons)
    EMAIL          HTML with deep links
    CLI            ANSI text, numbered options, prompt line
    WEBHOOK        the canonical message document itself
"""

from __future__ import annotations

import html
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Union

from .broker import Interaction
from .errors import (
    ActorMismatch,
    InteractionMismatch,
    UnparseableReply,
    UnsupportedChannel,
)
from .model import (
    A2HMessage,
    Channel,
    DecisionValue,
    HumanCard,
    HumanResponse,
    PrimitiveType,
    ResponseKind,
    deserialize_message,
    serialize_message,
)
from .wire import canonical_dumps, is_uuid4

APPROVE_WORDS = frozenset({"approve", "allow", "yes"})
DENY_WORDS = frozenset({"deny", "reject", "no"})

_ANSI_BOLD = "\x1b[1m"
_ANSI_RED = "\x1b[31m"
_ANSI_YELLOW = "\x1b[33m"
_ANSI_RESET = "\x1b[0m"

_ACTION_ID_RE = re.compile(r"^([0-9a-f-]{36})#(\d+)$")


class ContentKind(str, Enum):
    BLOCKS_DOC = "BLOCKS_DOC"
    HTML = "HTML"
    ANSI_TEXT = "ANSI_TEXT"
    PLAIN = "PLAIN"


_KIND_FOR_CHANNEL = {
    Channel.SLACK: ContentKind.BLOCKS_DOC,
    Channel.TEAMS: ContentKind.BLOCKS_DOC,
    Channel.EMAIL: ContentKind.HTML,
    Channel.CLI: ContentKind.ANSI_TEXT,
    Channel.WEBHOOK: ContentKind.PLAIN,
}


@dataclass(frozen=True)
class RenderedPayload:
    channel: Channel
    content: Union[dict, str]
    content_kind: ContentKind

    def content_text(self) -> str:
        """Canonical text form, used for goldens and inbox records."""
        if isinstance(self.content, dict):
            return canonical_dumps(self.content)
        return self.content

    def to_wire(self) -> dict:
        return {
            "channel": self.channel.value,
            "content": self.content,
            "content_kind": self.content_kind.value,
        }


@dataclass(frozen=True)
class ChannelEvent:
    """Raw event coming back from a channel: a button click (action_id)
    or free text, never both."""

    channel: Channel
    interaction_id: str
    actor: str
    action_id: str | None = None
    text: str | None = None

    def __post_init__(self):
        if (self.action_id is None) == (self.text is None):
            raise ValueError("exactly one of action_id / text must be present")

    @classmethod
    def from_wire(cls, doc: dict) -> "ChannelEvent":
        from .wire import check_fields, get_str

        check_fields(doc, required=("channel", "interaction_id", "actor"),
                     optional=("action_id", "text"))
        try:
            channel = Channel(get_str(doc, "channel"))
        except ValueError:
            raise UnsupportedChannel(f"unknown channel: {doc.get('channel')}")
        return cls(
            channel=channel,
            interaction_id=get_str(doc, "interaction_id"),
            actor=get_str(doc, "actor"),
            action_id=get_str(doc, "action_id") if "action_id" in doc else None,
            text=get_str(doc, "text") if "text" in doc else None,
        )


def action_id_for(interaction_id: str, index: int) -> str:
    return f"{interaction_id}#{index}"


def parse_action_id(action_id: str) -> tuple[str, int]:
    m = _ACTION_ID_RE.match(action_id)
    if not m or not is_uuid4(m.group(1)):
        raise UnparseableReply(f"malformed action id: {action_id!r}")
    return m.group(1), int(m.group(2))


def validate_a2h(doc: Union[str, bytes, dict]) -> A2HMessage:
    """Strict schema gate for inbound message documents."""
    return deserialize_message(doc)


def render(msg: A2HMessage, channel: Channel) -> RenderedPayload:
    """Deterministic channel rendering; equal inputs give identical bytes."""
    if not isinstance(channel, Channel):
        raise UnsupportedChannel(f"unsupported channel: {channel!r}")
    if channel in (Channel.SLACK, Channel.TEAMS):
        content: Union[dict, str] = _render_blocks(msg, channel)
    elif channel is Channel.EMAIL:
        content = _render_html(msg)
    elif channel is Channel.CLI:
        content = _render_ansi(msg)
    else:
        content = serialize_message(msg)
    return RenderedPayload(channel=channel, content=content,
                           content_kind=_KIND_FOR_CHANNEL[channel])


def _buttons(msg: A2HMessage) -> list[tuple[str, str, str]]:
    """(action_id, label, value) per clickable control, in message order."""
    labels = msg.button_labels()
    values = msg.button_values()
    return [
        (action_id_for(msg.interaction_id, i), labels[i], values[i])
        for i in range(len(values))
    ]


def _render_blocks(msg: A2HMessage, channel: Channel) -> dict:
    blocks: list[dict] = [
        {"type": "header", "text": {"type": "plain_text", "text": msg.summary}},
    ]
    if msg.body:
        blocks.append(
            {"type": "section", "text": {"type": "mrkdwn", "text": msg.body}})
    elements = []
    for i, (action_id, label, value) in enumerate(_buttons(msg)):
        button = {
            "type": "button",
            "text": {"type": "plain_text", "text": label},
            "action_id": action_id,
            "value": value,
        }
        # Risk styling: the approve control of a permission gate is the
        # dangerous one and renders red.
        if msg.type is PrimitiveType.PERMISSION and i == 0:
            button["style"] = "danger"
        elements.append(button)
    if elements:
        blocks.append({"type": "actions", "elements": elements})
    doc: dict[str, Any] = {"blocks": blocks}
    if channel is Channel.TEAMS:
        doc["platform"] = "teams"
    return doc


def _render_html(msg: A2HMessage) -> str:
    body_html = html.escape(msg.body).replace("\n", "<br>\n")
    lines = [
        "<!doctype html>",
        "<html><body>",
        f"<h2>{html.escape(msg.summary)}</h2>",
        f"<p>{body_html}</p>",
    ]
    buttons = _buttons(msg)
    if buttons:
        links = []
        for i, (action_id, label, _value) in enumerate(buttons):
            style = ' style="color:#cc0000"' \
                if msg.type is PrimitiveType.PERMISSION and i == 0 else ""
            iid, idx = action_id.split("#")
            links.append(
                f'<a href="a2h://respond/{iid}/{idx}" '
                f'data-action-id="{action_id}"{style}>{html.escape(label)}</a>')
        lines.append("<p>" + " | ".join(links) + "</p>")
    lines.append(f'<p class="meta">interaction {msg.interaction_id} ({msg.type.value})</p>')
    lines.append("</body></html>")
    return "\n".join(lines)


def _render_ansi(msg: A2HMessage) -> str:
    tag_color = _ANSI_RED if msg.type is PrimitiveType.PERMISSION else ""
    lines = [
        f"{_ANSI_BOLD}{tag_color}[{msg.type.value}]{_ANSI_RESET} "
        f"{_ANSI_YELLOW}{msg.summary}{_ANSI_RESET}",
    ]
    if msg.body:
        lines.append(msg.body)
    buttons = _buttons(msg)
    for i, (action_id, label, _value) in enumerate(buttons):
        lines.append(f"  {i + 1}) {label}  [{action_id}]")
    prompt = {
        PrimitiveType.PERMISSION: f"reply: a2h respond {msg.interaction_id} --approve | --deny",
        PrimitiveType.CLARIFICATION: f"reply: a2h respond {msg.interaction_id} --select N",
        PrimitiveType.SOLICITATION: f"reply: a2h respond {msg.interaction_id} --data TEXT",
        PrimitiveType.NOTIFICATION: "no response required",
    }[msg.type]
    lines.append(prompt)
    return "\n".join(lines) + "\n"


def extract_action_ids(payload: RenderedPayload) -> list[str]:
    """Pull every rendered action id back out of a payload, in order.
    Test harnesses use this to simulate clicks on any channel."""
    if payload.content_kind is ContentKind.BLOCKS_DOC:
        ids = []
        for block in payload.content["blocks"]:
            if block.get("type") == "actions":
                ids.extend(el["action_id"] for el in block["elements"])
        return ids
    if payload.content_kind is ContentKind.HTML:
        return re.findall(r'data-action-id="([^"]+)"', payload.content)
    if payload.content_kind is ContentKind.ANSI_TEXT:
        return re.findall(r"\[([0-9a-f-]{36}#\d+)\]", payload.content)
    msg = deserialize_message(payload.content)
    return [action_id_for(msg.interaction_id, i) for i in range(len(msg.button_values()))]


def _split_feedback(text: str) -> tuple[str, str | None]:
    """First token (lowercased, stripped of punctuation) plus trailing text."""
    stripped = text.strip()
    head, _, rest = stripped.partition(" ")
    rest = rest.strip()
    return head.strip(".,!:;").lower(), rest or None


def normalize(event: ChannelEvent, interaction: Interaction,
              card: HumanCard) -> HumanResponse:
    """Map a raw channel event onto a typed response for the interaction.

    The channel actor must match the card's endpoint address for that
    channel (the card is the endpoint table of the interaction's target).
    Button clicks resolve through the embedded option index; free text is
    interpreted per primitive, with any trailing text on a permission
    reply captured as feedback. Unmappable input raises UnparseableReply.
    """
    if event.interaction_id != interaction.id:
        raise InteractionMismatch(
            f"event targets {event.interaction_id}, interaction is {interaction.id}")
    expected_actor = card.endpoint_for(event.channel)
    if expected_actor is None or expected_actor != event.actor:
        raise ActorMismatch(
            f"actor {event.actor!r} does not map to {interaction.target.canonical} "
            f"on channel {event.channel.value}")

    msg = interaction.message
    primitive = interaction.primitive
    feedback: str | None = None

    if event.action_id is not None:
        action_iid, index = parse_action_id(event.action_id)
        if action_iid != interaction.id:
            raise InteractionMismatch("action id belongs to another interaction")
        values = msg.button_values()
        if index >= len(values):
            raise UnparseableReply(f"action index {index} out of range")
        value = values[index]
        if primitive is PrimitiveType.PERMISSION:
            decision = DecisionValue.APPROVED if index == 0 else DecisionValue.DENIED
            return HumanResponse(
                interaction_id=interaction.id, human_id=interaction.target,
                kind=ResponseKind.DECISION, decision=decision, feedback=None)
        if primitive is PrimitiveType.CLARIFICATION:
            return HumanResponse(
                interaction_id=interaction.id, human_id=interaction.target,
                kind=ResponseKind.SELECTION, selected_option=value, feedback=None)
        if primitive is PrimitiveType.SOLICITATION:
            # Quick-reply button: the label is the canned data.
            return HumanResponse(
                interaction_id=interaction.id, human_id=interaction.target,
                kind=ResponseKind.DATA, data=value, feedback=None)
        raise UnparseableReply("notifications have no clickable actions")

    text = event.text or ""
    if primitive is PrimitiveType.PERMISSION:
        head, feedback = _split_feedback(text)
        if head in APPROVE_WORDS:
            decision = DecisionValue.APPROVED
        elif head in DENY_WORDS:
            decision = DecisionValue.DENIED
        else:
            raise UnparseableReply(f"cannot read a decision from {text!r}")
        return HumanResponse(
            interaction_id=interaction.id, human_id=interaction.target,
            kind=ResponseKind.DECISION, decision=decision, feedback=feedback)
    if primitive is PrimitiveType.CLARIFICATION:
        stripped = text.strip()
        for option in msg.options:
            if stripped.lower() == option.lower():
                return HumanResponse(
                    interaction_id=interaction.id, human_id=interaction.target,
                    kind=ResponseKind.SELECTION, selected_option=option, feedback=None)
        head, feedback = _split_feedback(text)
        if head.isdigit() and 1 <= int(head) <= len(msg.options):
            return HumanResponse(
                interaction_id=interaction.id, human_id=interaction.target,
                kind=ResponseKind.SELECTION,
                selected_option=msg.options[int(head) - 1], feedback=feedback)
        raise UnparseableReply(f"cannot match {text!r} to an option")
    if primitive is PrimitiveType.SOLICITATION:
        if not text.strip():
            raise UnparseableReply("empty reply carries no data")
        return HumanResponse(
            interaction_id=interaction.id, human_id=interaction.target,
            kind=ResponseKind.DATA, data=text, feedback=None)
    # NOTIFICATION: any reply is an optional acknowledgment.
    return HumanResponse(
        interaction_id=interaction.id, human_id=interaction.target,
        kind=ResponseKind.ACK, feedback=text.strip() or None)
