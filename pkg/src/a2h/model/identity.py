"""Resolvable human identity under the ``human://`` scheme.

Identifiers look like DNS names: ``human://`` followed by dot-separated
labels (``human://alice.eng``). The canonical form is fully lowercase;
parsing normalizes case, so parse-then-serialize is idempotent.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import MalformedId

SCHEME = "human://"
MAX_LABELS = 8
MAX_CANONICAL_LENGTH = 255

_LABEL_RE = re.compile(r"^[a-z0-9_-]{1,63}$")


@dataclass(frozen=True)
class HumanId:
    """Immutable identity value. ``labels`` are already in normal form."""

    labels: tuple[str, ...]

    def __post_init__(self):
        if not 1 <= len(self.labels) <= MAX_LABELS:
            raise MalformedId(f"expected 1..{MAX_LABELS} labels, got {len(self.labels)}")
        for label in self.labels:
            if not _LABEL_RE.match(label):
                raise MalformedId(f"illegal label: {label!r}")
        if len(self.canonical) > MAX_CANONICAL_LENGTH:
            raise MalformedId("canonical form exceeds 255 characters")

    @property
    def canonical(self) -> str:
        return SCHEME + ".".join(self.labels)

    def __str__(self) -> str:
        return self.canonical


def parse_human_id(text: str) -> HumanId:
    """Parse a textual id, lowercasing scheme and labels.

    Raises MalformedId for a wrong scheme, empty labels, characters
    outside ``[a-z0-9_-]``, or length overflow.
    """
    if not isinstance(text, str):
        raise MalformedId("id must be a string")
    lowered = text.lower()
    if not lowered.startswith(SCHEME):
        raise MalformedId(f"expected scheme {SCHEME!r}: {text!r}")
    rest = lowered[len(SCHEME):]
    if not rest:
        raise MalformedId("id has no labels")
    return HumanId(labels=tuple(rest.split(".")))
