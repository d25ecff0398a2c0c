"""Canonical wire format helpers.

Every document this package reads or writes is UTF-8 JSON with sorted
keys and no insignificant whitespace, so equal values always serialize
to identical bytes. Parsing is strict: duplicate keys, missing required
fields and unknown fields are rejected.
"""

from __future__ import annotations

import json
import re
import uuid
from typing import Any, Iterable, Mapping

from .errors import SchemaViolation, UnknownField

UUID4_RE = re.compile(
    r"^[0-9a-f]{8}-[0-9a-f]{4}-4[0-9a-f]{3}-[89ab][0-9a-f]{3}-[0-9a-f]{12}$"
)


def canonical_dumps(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_dumps_bytes(value: Any) -> bytes:
    return canonical_dumps(value).encode("utf-8")


def _reject_duplicate_keys(pairs: list[tuple[str, Any]]) -> dict:
    obj: dict[str, Any] = {}
    for key, val in pairs:
        if key in obj:
            raise SchemaViolation(key, f"duplicate key: {key}")
        obj[key] = val
    return obj


def canonical_loads(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise SchemaViolation("$", f"not valid UTF-8: {exc}") from exc
    try:
        return json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("$", f"not valid JSON: {exc}") from exc


def check_fields(
    doc: Mapping[str, Any],
    required: Iterable[str],
    optional: Iterable[str] = (),
) -> None:
    """Strict field-set check. Missing fields are reported first (in sorted
    order, so the 'first offending field' is deterministic), then unknown ones.
    """
    if not isinstance(doc, Mapping):
        raise SchemaViolation("$", "document root must be an object")
    req = set(required)
    allowed = req | set(optional)
    for name in sorted(req):
        if name not in doc:
            raise SchemaViolation(name, f"missing required field: {name}")
    for name in sorted(doc):
        if name not in allowed:
            raise UnknownField(name)


def get_str(doc: Mapping[str, Any], field: str) -> str:
    value = doc[field]
    if not isinstance(value, str):
        raise SchemaViolation(field, f"{field} must be a string")
    return value


def get_str_list(doc: Mapping[str, Any], field: str) -> list[str]:
    value = doc[field]
    if not isinstance(value, list) or any(not isinstance(v, str) for v in value):
        raise SchemaViolation(field, f"{field} must be a list of strings")
    return value


def get_number(doc: Mapping[str, Any], field: str) -> float:
    value = doc[field]
    # bool is an int subclass; it is not a number on this wire.
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(field, f"{field} must be a number")
    return float(value)


def get_int(doc: Mapping[str, Any], field: str) -> int:
    value = doc[field]
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(field, f"{field} must be an integer")
    return value


def get_bool(doc: Mapping[str, Any], field: str) -> bool:
    value = doc[field]
    if not isinstance(value, bool):
        raise SchemaViolation(field, f"{field} must be a boolean")
    return value


def get_object(doc: Mapping[str, Any], field: str) -> dict:
    value = doc[field]
    if not isinstance(value, dict):
        raise SchemaViolation(field, f"{field} must be an object")
    return value


def is_uuid4(value: str) -> bool:
    return isinstance(value, str) and UUID4_RE.match(value) is not None


def new_uuid4() -> str:
    return str(uuid.uuid4())


def seeded_uuid_factory(seed: int):
    """Deterministic UUIDv4-shaped id stream for reproducible runs."""
    import random

    rng = random.Random(seed)

    def make() -> str:
        raw = rng.getrandbits(128).to_bytes(16, "big")
        return str(uuid.UUID(bytes=raw, version=4))

    return make
