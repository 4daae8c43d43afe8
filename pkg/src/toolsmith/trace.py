"""Append-only session event log: JSON lines on disk, fan-out to live
subscribers (the SSE stream) in memory.

Events carry a 1-based `seq` so a disconnected consumer can resume from
the last id it saw. Nothing here ever stores secrets; callers redact
before appending.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Any, Callable, Iterator

EVENT_SESSION_STARTED = "session_started"
EVENT_PHASE = "phase"
EVENT_STAGE_USAGE = "stage_usage"
EVENT_SUBTASKS = "subtasks"
EVENT_TOOL_REQUIREMENTS = "tool_requirements"
EVENT_SELECTION = "selection"
EVENT_APPROVAL_REQUESTED = "approval_requested"
EVENT_APPROVAL_DECIDED = "approval_decided"
EVENT_GENERATION_ITERATION = "generation_iteration"
EVENT_EXECUTION = "execution"  # sandbox draft runs only, gate-checked
EVENT_TOOL_REGISTERED = "tool_registered"
EVENT_SOLVE_STEP = "solve_step"
EVENT_ANSWER = "answer"
EVENT_WARNING = "warning"
EVENT_TERMINAL = "terminal"


class TraceLog:
    """One per session. Thread-safe appends, ordered delivery."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._seq = 0
        self._subscribers: list[Callable[[dict[str, Any]], None]] = []
        if self.path.exists():
            with self.path.open(encoding="utf-8") as handle:
                self._seq = sum(1 for line in handle if line.strip())

    def append(self, kind: str, **fields: Any) -> dict[str, Any]:
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "ts": time.time(), "kind": kind, **fields}
            line = json.dumps(event, default=str)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
            subscribers = list(self._subscribers)
        for callback in subscribers:
            callback(event)
        return event

    def subscribe(self, callback: Callable[[dict[str, Any]], None]) -> Callable[[], None]:
        """Register a live listener; returns an unsubscribe function."""
        with self._lock:
            self._subscribers.append(callback)

        def _unsubscribe() -> None:
            with self._lock:
                if callback in self._subscribers:
                    self._subscribers.remove(callback)

        return _unsubscribe

    def events(self, after_seq: int = 0) -> list[dict[str, Any]]:
        """Read back persisted events with seq greater than after_seq."""
        if not self.path.exists():
            return []
        out: list[dict[str, Any]] = []
        with self.path.open(encoding="utf-8") as handle:
            for line in handle:
                if not line.strip():
                    continue
                event = json.loads(line)
                if event.get("seq", 0) > after_seq:
                    out.append(event)
        return out

    @property
    def last_seq(self) -> int:
        return self._seq


def read_events(path: str | Path) -> list[dict[str, Any]]:
    """Parse a trace file without constructing a TraceLog."""
    trace_path = Path(path)
    if not trace_path.exists():
        return []
    events = []
    with trace_path.open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                events.append(json.loads(line))
    return events
