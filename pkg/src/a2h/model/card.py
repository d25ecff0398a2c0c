"""Human Card: the registry record that makes a person discoverable.

A card bundles identity, profile metadata, capability tags, communication
endpoints and live availability. Card values are permissive containers;
``validate_card`` is the gate that decides whether a card may enter the
registry, and it reports violations as data rather than raising.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from ..errors import SchemaViolation
from ..wire import check_fields, get_object, get_str, get_str_list
from .identity import HumanId, parse_human_id

_TAG_RE = re.compile(r"^[a-z0-9_]{1,64}$")
_TZ_RE = re.compile(r"^UTC([+-])(\d{1,2})(?::([0-5]\d))?$")

# Offset bounds for real-world UTC zones.
_TZ_MIN_MINUTES = -12 * 60
_TZ_MAX_MINUTES = 14 * 60


class Channel(str, Enum):
    """Communication channels a card may expose. Wire keys are lowercase."""

    SLACK = "slack"
    TEAMS = "teams"
    EMAIL = "email"
    CLI = "cli"
    WEBHOOK = "webhook"


class AvailabilityStatus(str, Enum):
    AVAILABLE = "AVAILABLE"
    BUSY = "BUSY"
    OFFLINE = "OFFLINE"


def normalize_tag(raw: str) -> str:
    """Trim, lowercase, and turn whitespace runs into single underscores."""
    return "_".join(raw.strip().lower().split())


@dataclass(frozen=True)
class CapabilityTag:
    """Expertise tag. Normalization happens at construction; the stored
    value is already in normal form. Pattern conformance (``[a-z0-9_]{1,64}``)
    is a validation concern so bad input can be reported, not raised.
    """

    value: str

    def __post_init__(self):
        object.__setattr__(self, "value", normalize_tag(self.value))

    @property
    def is_well_formed(self) -> bool:
        return _TAG_RE.match(self.value) is not None

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Profile:
    name: str
    role: str
    timezone: str


@dataclass(frozen=True)
class Endpoint:
    channel: Channel
    address: str


@dataclass(frozen=True)
class HumanCard:
    id: HumanId
    profile: Profile
    capabilities: tuple[CapabilityTag, ...]
    endpoints: tuple[Endpoint, ...]
    status: AvailabilityStatus = AvailabilityStatus.OFFLINE

    def capability_values(self) -> frozenset[str]:
        return frozenset(tag.value for tag in self.capabilities)

    def endpoint_for(self, channel: Channel) -> str | None:
        for ep in self.endpoints:
            if ep.channel is channel:
                return ep.address
        return None

    def to_wire(self) -> dict:
        return {
            "id": self.id.canonical,
            "profile": {
                "name": self.profile.name,
                "role": self.profile.role,
                "timezone": self.profile.timezone,
            },
            "capabilities": sorted(self.capability_values()),
            "endpoints": {ep.channel.value: ep.address for ep in self.endpoints},
            "status": self.status.value,
        }

    @classmethod
    def from_wire(cls, doc: Mapping[str, Any]) -> "HumanCard":
        """Structural parse of a card document. Shape errors raise
        SchemaViolation/MalformedId; semantic problems (empty name, bad
        timezone, duplicate tags) are left for validate_card to report.
        """
        check_fields(doc, required=("id", "profile", "capabilities", "endpoints"),
                     optional=("status",))
        card_id = parse_human_id(get_str(doc, "id"))

        profile_doc = get_object(doc, "profile")
        check_fields(profile_doc, required=("name", "role", "timezone"))
        profile = Profile(
            name=get_str(profile_doc, "name"),
            role=get_str(profile_doc, "role"),
            timezone=get_str(profile_doc, "timezone"),
        )

        capabilities = tuple(
            CapabilityTag(raw) for raw in get_str_list(doc, "capabilities")
        )

        endpoints_doc = get_object(doc, "endpoints")
        endpoints = []
        for key in endpoints_doc:
            try:
                channel = Channel(key)
            except ValueError:
                raise SchemaViolation(f"endpoints.{key}", f"unknown channel: {key}")
            address = endpoints_doc[key]
            if not isinstance(address, str):
                raise SchemaViolation(f"endpoints.{key}", "address must be a string")
            endpoints.append(Endpoint(channel=channel, address=address))
        # Wire order is an object; store in channel order for determinism.
        endpoints.sort(key=lambda ep: ep.channel.value)

        if "status" in doc:
            raw_status = get_str(doc, "status")
            try:
                status = AvailabilityStatus(raw_status)
            except ValueError:
                raise SchemaViolation("status", f"unknown status: {raw_status}")
        else:
            status = AvailabilityStatus.OFFLINE

        return cls(id=card_id, profile=profile, capabilities=capabilities,
                   endpoints=tuple(endpoints), status=status)


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def to_wire(self) -> dict:
        return {"path": self.path, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_wire(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_wire() for v in self.violations]}


def parse_utc_offset(timezone: str) -> int | None:
    """Offset in minutes for a ``UTC±H[:MM]`` string, or None if malformed."""
    m = _TZ_RE.match(timezone)
    if not m:
        return None
    sign = 1 if m.group(1) == "+" else -1
    minutes = int(m.group(2)) * 60 + int(m.group(3) or 0)
    return sign * minutes


def validate_card(card: HumanCard) -> ValidationReport:
    """Check every card invariant; violations come back with field paths."""
    found: list[Violation] = []

    if not card.profile.name:
        found.append(Violation("profile.name", "name must be non-empty"))
    offset = parse_utc_offset(card.profile.timezone)
    if offset is None:
        found.append(Violation(
            "profile.timezone",
            f"timezone must look like UTC+H or UTC+H:MM, got {card.profile.timezone!r}",
        ))
    elif not _TZ_MIN_MINUTES <= offset <= _TZ_MAX_MINUTES:
        found.append(Violation(
            "profile.timezone", "offset must lie within [-12:00, +14:00]"))

    seen_tags: dict[str, int] = {}
    duplicate_tags: list[str] = []
    for i, tag in enumerate(card.capabilities):
        if not tag.is_well_formed:
            found.append(Violation(f"capabilities[{i}]", f"malformed tag: {tag.value!r}"))
        if tag.value in seen_tags:
            if tag.value not in duplicate_tags:
                duplicate_tags.append(tag.value)
        else:
            seen_tags[tag.value] = i
    for dup in duplicate_tags:
        found.append(Violation("capabilities", f"duplicate tag after normalization: {dup!r}"))

    if not card.endpoints:
        found.append(Violation("endpoints", "card with no endpoint is unreachable"))
    seen_channels: set[Channel] = set()
    for ep in card.endpoints:
        if ep.channel in seen_channels:
            found.append(Violation(
                "endpoints", f"more than one endpoint for channel {ep.channel.value!r}"))
        seen_channels.add(ep.channel)
        if not ep.address:
            found.append(Violation(
                f"endpoints.{ep.channel.value}", "address must be non-empty"))

    return ValidationReport(violations=tuple(found))
