"""Durable state via an append-only operation log plus periodic snapshots.

Both the registry and the broker persist through this mechanism: every
mutation appends one canonical-format line to ``<name>.log``; every
``snapshot_every`` appends the owner's full state is written to
``<name>.snapshot`` and the log restarts empty. Startup loads the
snapshot (if any) and replays the residual log. Files are plain text,
one document per line, so the history is auditable with standard tools.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Callable

from .errors import StorageFailure
from .wire import canonical_dumps, canonical_loads


class Journal:
    """Log+snapshot pair for one named store inside a storage directory."""

    def __init__(self, directory: str | Path, name: str, snapshot_every: int = 256):
        self.directory = Path(directory)
        try:
            self.directory.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageFailure(f"cannot create storage directory: {exc}")
        self.log_path = self.directory / f"{name}.log"
        self.snapshot_path = self.directory / f"{name}.snapshot"
        self.snapshot_every = snapshot_every
        self._appends_since_snapshot = 0

    def load(self) -> tuple[dict | None, list[dict]]:
        """Return (snapshot document or None, log entries after it)."""
        snapshot = None
        if self.snapshot_path.exists():
            raw = self.snapshot_path.read_text(encoding="utf-8").strip()
            if raw:
                snapshot = canonical_loads(raw)
        entries: list[dict] = []
        if self.log_path.exists():
            for line in self.log_path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    entries.append(canonical_loads(line))
        self._appends_since_snapshot = len(entries)
        return snapshot, entries

    def append(self, entry: dict, state_dump: Callable[[], dict] | None = None) -> None:
        """Append one entry; compact into a snapshot when the log grows past
        the threshold and the owner supplied a state dump."""
        line = canonical_dumps(entry) + "\n"
        try:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot append to {self.log_path}: {exc}")
        self._appends_since_snapshot += 1
        if state_dump is not None and self._appends_since_snapshot >= self.snapshot_every:
            self.write_snapshot(state_dump())

    def write_snapshot(self, state: dict) -> None:
        tmp = self.snapshot_path.with_suffix(".snapshot.tmp")
        try:
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(canonical_dumps(state) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.snapshot_path)
            with open(self.log_path, "w", encoding="utf-8") as fh:
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot write snapshot {self.snapshot_path}: {exc}")
        self._appends_since_snapshot = 0
