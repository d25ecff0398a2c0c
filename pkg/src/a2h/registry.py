"""Card registry: stores Human Cards and answers discovery queries.

Single-node with file-backed persistence. Writes are serialized through
one lock and return a registry-wide monotonic revision, so the interface
stays replication-agnostic. Discovery runs against a tag-to-ids inverted
index; the brute-force predicate scan lives only in the test oracle.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import InvalidCard, NotFound, SchemaViolation
from .model import (
    AvailabilityStatus,
    CapabilityTag,
    HumanCard,
    HumanId,
    validate_card,
)
from .storage import Journal
from .wire import check_fields, get_int, get_object, get_str

MAX_LIMIT = 100
DEFAULT_LIMIT = 10


@dataclass(frozen=True)
class DiscoveryQuery:
    """Find humans holding every required tag, optionally filtered by
    availability. ``status=None`` disables the status filter; the default
    asks for AVAILABLE humans, the common case for live escalation."""

    required_tags: frozenset[CapabilityTag]
    status: AvailabilityStatus | None = AvailabilityStatus.AVAILABLE
    limit: int = DEFAULT_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "required_tags", frozenset(self.required_tags))
        if not self.required_tags:
            raise ValueError("required_tags must be non-empty")
        if not 1 <= self.limit <= MAX_LIMIT:
            raise ValueError(f"limit must be in 1..{MAX_LIMIT}")

    @classmethod
    def of(cls, *tags: str, status: AvailabilityStatus | None = AvailabilityStatus.AVAILABLE,
           limit: int = DEFAULT_LIMIT) -> "DiscoveryQuery":
        return cls(required_tags=frozenset(CapabilityTag(t) for t in tags),
                   status=status, limit=limit)


@dataclass(frozen=True)
class DiscoveryResult:
    """Matches ranked by match_count descending, then canonical id."""

    entries: tuple[tuple[HumanCard, int], ...]

    def cards(self) -> list[HumanCard]:
        return [card for card, _ in self.entries]

    def ids(self) -> list[str]:
        return [card.id.canonical for card, _ in self.entries]

    def to_wire(self) -> dict:
        return {
            "results": [
                {"card": card.to_wire(), "match_count": count}
                for card, count in self.entries
            ]
        }


class CardRegistry:
    """Thread-safe card store. Pass ``storage_dir`` for durability; without
    it the registry is purely in-memory (tests, embedded demo)."""

    def __init__(self, storage_dir: str | Path | None = None, *,
                 snapshot_every: int = 256):
        self._lock = threading.RLock()
        self._cards: dict[str, HumanCard] = {}
        self._by_tag: dict[str, set[str]] = {}
        self._revision = 0
        self._journal: Journal | None = None
        if storage_dir is not None:
            self._journal = Journal(storage_dir, "registry", snapshot_every)
            self._replay()

    # -- persistence ------------------------------------------------------

    def _replay(self) -> None:
        assert self._journal is not None
        snapshot, entries = self._journal.load()
        if snapshot is not None:
            self._revision = get_int(snapshot, "revision")
            for doc in snapshot["cards"]:
                card = HumanCard.from_wire(doc)
                self._index(card)
        for entry in entries:
            self._apply(entry)

    def _apply(self, entry: Mapping[str, Any]) -> None:
        op = get_str(entry, "op")
        self._revision = get_int(entry, "revision")
        if op == "register":
            self._index(HumanCard.from_wire(get_object(entry, "card")))
        elif op == "set_status":
            key = get_str(entry, "id")
            card = self._cards[key]
            status = AvailabilityStatus(get_str(entry, "status"))
            self._index(HumanCard(id=card.id, profile=card.profile,
                                  capabilities=card.capabilities,
                                  endpoints=card.endpoints, status=status))
        elif op == "deregister":
            self._unindex(get_str(entry, "id"))
        else:
            raise SchemaViolation("op", f"unknown registry op: {op}")

    def _journal_write(self, entry: dict) -> None:
        if self._journal is not None:
            self._journal.append(entry, state_dump=self._dump_state)

    def _dump_state(self) -> dict:
        return {
            "revision": self._revision,
            "cards": [self._cards[key].to_wire() for key in sorted(self._cards)],
        }

    # -- index maintenance -------------------------------------------------

    def _index(self, card: HumanCard) -> None:
        key = card.id.canonical
        self._unindex(key)
        self._cards[key] = card
        for value in card.capability_values():
            self._by_tag.setdefault(value, set()).add(key)

    def _unindex(self, key: str) -> bool:
        old = self._cards.pop(key, None)
        if old is None:
            return False
        for value in old.capability_values():
            bucket = self._by_tag.get(value)
            if bucket is not None:
                bucket.discard(key)
                if not bucket:
                    del self._by_tag[value]
        return True

    # -- operations ---------------------------------------------------------

    @property
    def revision(self) -> int:
        with self._lock:
            return self._revision

    def register_card(self, card: HumanCard) -> HumanId:
        """Upsert a card. Re-registering an id replaces the card atomically
        and bumps the revision. Raises InvalidCard with the full report."""
        report = validate_card(card)
        if not report.ok:
            raise InvalidCard(report)
        with self._lock:
            self._revision += 1
            self._index(card)
            self._journal_write({
                "op": "register", "revision": self._revision, "card": card.to_wire()})
            return card.id

    def get_card(self, human_id: HumanId) -> HumanCard:
        with self._lock:
            card = self._cards.get(human_id.canonical)
            if card is None:
                raise NotFound(f"no card for {human_id.canonical}")
            return card

    def set_status(self, human_id: HumanId, status: AvailabilityStatus) -> int:
        """Update availability. Writes are never silent: setting the current
        status still bumps and returns the revision."""
        with self._lock:
            card = self.get_card(human_id)
            self._revision += 1
            self._index(HumanCard(id=card.id, profile=card.profile,
                                  capabilities=card.capabilities,
                                  endpoints=card.endpoints, status=status))
            self._journal_write({
                "op": "set_status", "revision": self._revision,
                "id": human_id.canonical, "status": status.value})
            return self._revision

    def deregister(self, human_id: HumanId) -> bool:
        with self._lock:
            removed = self._unindex(human_id.canonical)
            if removed:
                self._revision += 1
                self._journal_write({
                    "op": "deregister", "revision": self._revision,
                    "id": human_id.canonical})
            return removed

    def discover(self, query: DiscoveryQuery) -> DiscoveryResult:
        """All cards holding every required tag (and the requested status),
        ranked by match count descending with ties broken by canonical id."""
        with self._lock:
            candidate_sets = []
            for tag in query.required_tags:
                bucket = self._by_tag.get(tag.value)
                if not bucket:
                    return DiscoveryResult(entries=())
                candidate_sets.append(bucket)
            candidate_sets.sort(key=len)
            keys = set(candidate_sets[0])
            for bucket in candidate_sets[1:]:
                keys &= bucket
            matched = []
            required_values = {t.value for t in query.required_tags}
            for key in keys:
                card = self._cards[key]
                if query.status is not None and card.status is not query.status:
                    continue
                match_count = len(required_values & card.capability_values())
                matched.append((card, match_count))
            matched.sort(key=lambda pair: (-pair[1], pair[0].id.canonical))
            return DiscoveryResult(entries=tuple(matched[: query.limit]))

    def all_cards(self) -> list[HumanCard]:
        with self._lock:
            return [self._cards[key] for key in sorted(self._cards)]

    def dump(self) -> list[dict]:
        """Full sorted state, used for durability checks and snapshots."""
        with self._lock:
            return [card.to_wire() for card in self.all_cards()]
