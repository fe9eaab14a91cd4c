"""In-process registry of open canvases plus their event streams.

All mutations of one canvas are serialized through its lock (the canvas's
single mutation queue); events get a per-canvas, gap-free sequence number
assigned under that same lock. Subscribers receive events through bounded
queues — a subscriber that falls more than EVENT_BUFFER events behind is
disconnected rather than allowed to stall publishers.
"""

from __future__ import annotations

import queue
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator

from .model import Canvas, UnknownEntityError, new_canvas

EVENT_BUFFER = 1024

EVENT_KINDS = frozenset(
    {
        "cell-created",
        "cell-moved",
        "cell-updated",
        "cell-deleted",
        "output-updated",
        "output-detached",
        "output-deleted",
        "env-created",
        "env-moved",
        "env-deleted",
        "execution-started",
        "execution-finished",
        "session-warning",
    }
)


@dataclass(frozen=True)
class CanvasEvent:
    seq: int
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "payload": self.payload}


class Subscription:
    """One listener on a canvas's event stream."""

    def __init__(self, backlog: list[CanvasEvent]):
        self._queue: queue.Queue[CanvasEvent | None] = queue.Queue(maxsize=EVENT_BUFFER)
        self.closed = False
        for event in backlog:
            self._queue.put_nowait(event)

    def _publish(self, event: CanvasEvent) -> bool:
        try:
            self._queue.put_nowait(event)
            return True
        except queue.Full:
            self.close()
            return False

    def get(self, timeout: float | None = None) -> CanvasEvent | None:
        """Next event, or None on timeout / after close."""
        if self.closed and self._queue.empty():
            return None
        try:
            return self._queue.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        self.closed = True
        try:
            self._queue.put_nowait(None)
        except queue.Full:
            pass


@dataclass
class _Entry:
    canvas: Canvas
    lock: threading.RLock = field(default_factory=threading.RLock)
    events: list[CanvasEvent] = field(default_factory=list)
    subscribers: list[Subscription] = field(default_factory=list)


class DocumentStore:
    def __init__(self):
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.Lock()
        # Called with the canvas id after every mutation (autosave hook).
        self.on_mutate: list[Callable[[str], None]] = []

    # -- registry -----------------------------------------------------------

    def create(self, title: str = "Untitled", canvas_id: str | None = None) -> Canvas:
        canvas = new_canvas(canvas_id=canvas_id, title=title)
        self.add(canvas)
        return canvas

    def add(self, canvas: Canvas) -> Canvas:
        with self._lock:
            if canvas.id in self._entries:
                raise ValueError(f"canvas {canvas.id} is already open")
            self._entries[canvas.id] = _Entry(canvas=canvas)
        return canvas

    def remove(self, canvas_id: str) -> Canvas:
        with self._lock:
            entry = self._entries.pop(canvas_id, None)
        if entry is None:
            raise UnknownEntityError(f"no canvas {canvas_id!r}")
        for sub in entry.subscribers:
            sub.close()
        return entry.canvas

    def replace(self, canvas: Canvas) -> None:
        entry = self._entry(canvas.id)
        with entry.lock:
            entry.canvas = canvas

    def ids(self) -> list[str]:
        with self._lock:
            return list(self._entries)

    def contains(self, canvas_id: str) -> bool:
        with self._lock:
            return canvas_id in self._entries

    def _entry(self, canvas_id: str) -> _Entry:
        with self._lock:
            entry = self._entries.get(canvas_id)
        if entry is None:
            raise UnknownEntityError(f"no canvas {canvas_id!r}")
        return entry

    # -- access -------------------------------------------------------------

    @contextmanager
    def locked(self, canvas_id: str) -> Iterator[Canvas]:
        """Exclusive access to one canvas; every read-modify cycle goes here."""
        entry = self._entry(canvas_id)
        with entry.lock:
            yield entry.canvas

    def mutate(self, canvas_id: str, fn: Callable[[Canvas], Any]) -> Any:
        entry = self._entry(canvas_id)
        with entry.lock:
            result = fn(entry.canvas)
        for hook in list(self.on_mutate):
            hook(canvas_id)
        return result

    def touched(self, canvas_id: str) -> None:
        """Run mutation hooks for a canvas mutated under ``locked``."""
        for hook in list(self.on_mutate):
            hook(canvas_id)

    # -- events ---------------------------------------------------------------

    def emit(self, canvas_id: str, kind: str, payload: dict) -> CanvasEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        entry = self._entry(canvas_id)
        with entry.lock:
            event = CanvasEvent(seq=len(entry.events) + 1, kind=kind, payload=payload)
            entry.events.append(event)
            dead = [sub for sub in entry.subscribers if not sub._publish(event)]
            for sub in dead:
                entry.subscribers.remove(sub)
        return event

    def events_since(self, canvas_id: str, from_seq: int = 1) -> list[CanvasEvent]:
        entry = self._entry(canvas_id)
        with entry.lock:
            return [e for e in entry.events if e.seq >= from_seq]

    def subscribe(self, canvas_id: str, from_seq: int | None = None) -> Subscription:
        """Start listening; with ``from_seq`` the backlog from that sequence
        number is replayed first, gap-free up to the live stream."""
        entry = self._entry(canvas_id)
        with entry.lock:
            backlog = [] if from_seq is None else [e for e in entry.events if e.seq >= from_seq]
            sub = Subscription(backlog=backlog[-EVENT_BUFFER:])
            entry.subscribers.append(sub)
        return sub

    def unsubscribe(self, canvas_id: str, sub: Subscription) -> None:
        try:
            entry = self._entry(canvas_id)
        except UnknownEntityError:
            return
        with entry.lock:
            if sub in entry.subscribers:
                entry.subscribers.remove(sub)
        sub.close()
