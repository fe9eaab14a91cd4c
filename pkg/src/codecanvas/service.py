"""High-level canvas operations shared by the HTTP layer, the agent and the CLI.

Every mutation goes through CanvasService so that, regardless of the entry
point, the same three things always happen in order: the model operation
runs under the canvas lock, a canvas event is emitted, and the autosaver is
nudged. Workspace persistence is debounced and crash-safe (write to a temp
file, then rename over the old one).
"""

from __future__ import annotations

import logging
import os
import threading
import uuid
from pathlib import Path
from typing import Callable

from . import formats, model
from .documents import DocumentStore
from .model import Canvas, Cell, Environment, OutputCell, Point
from .orchestrator import ExecutionResult, Orchestrator

logger = logging.getLogger(__name__)

AUTOSAVE_DELAY = 0.5


class Workspace:
    """Directory of ``.2dntb`` files, one per canvas."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"workspace directory {self.root} does not exist")
        self._bindings: dict[str, Path] = {}

    def bind(self, canvas_id: str, path: Path | None = None) -> Path:
        bound = path or self._bindings.get(canvas_id) or self.root / f"{canvas_id}.2dntb"
        self._bindings[canvas_id] = bound
        return bound

    def path_for(self, canvas_id: str) -> Path | None:
        return self._bindings.get(canvas_id)

    def bound_paths(self) -> set[Path]:
        return set(self._bindings.values())

    def unbound_files(self) -> list[Path]:
        return sorted(
            p for p in self.root.glob("*.2dntb") if p not in self.bound_paths()
        )

    def save(self, canvas: Canvas) -> Path:
        path = self.bind(canvas.id)
        tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
        tmp.write_bytes(formats.serialize_2dntb(canvas))
        os.replace(tmp, path)
        return path

    def forget(self, canvas_id: str, delete_file: bool = False) -> None:
        path = self._bindings.pop(canvas_id, None)
        if delete_file and path is not None and path.exists():
            path.unlink()


class Autosaver:
    """Debounces save requests per canvas; the timer factory is injectable so
    tests can trigger flushes deterministically."""

    def __init__(
        self,
        save: Callable[[str], None],
        delay: float = AUTOSAVE_DELAY,
        timer_factory: Callable = threading.Timer,
    ):
        self._save = save
        self._delay = delay
        self._timer_factory = timer_factory
        self._pending: dict[str, object] = {}
        self._lock = threading.Lock()
        self._closed = False

    def touch(self, canvas_id: str) -> None:
        with self._lock:
            if self._closed:
                return
            old = self._pending.pop(canvas_id, None)
            if old is not None:
                old.cancel()
            timer = self._timer_factory(self._delay, self._fire, args=(canvas_id,))
            timer.daemon = True
            self._pending[canvas_id] = timer
            timer.start()

    def _fire(self, canvas_id: str) -> None:
        with self._lock:
            self._pending.pop(canvas_id, None)
        self._save(canvas_id)

    def cancel(self, canvas_id: str) -> None:
        with self._lock:
            timer = self._pending.pop(canvas_id, None)
        if timer is not None:
            timer.cancel()

    def flush(self) -> None:
        with self._lock:
            pending = list(self._pending)
            for timer in self._pending.values():
                timer.cancel()
            self._pending.clear()
        for canvas_id in pending:
            self._save(canvas_id)

    def close(self) -> None:
        with self._lock:
            self._closed = True
        self.flush()


class CanvasService:
    def __init__(
        self,
        store: DocumentStore,
        orchestrator: Orchestrator,
        workspace: Workspace | None = None,
        autosave_delay: float = AUTOSAVE_DELAY,
        timer_factory: Callable = threading.Timer,
    ):
        self.store = store
        self.orchestrator = orchestrator
        self.workspace = workspace
        self.autosaver = Autosaver(
            self._save_now, delay=autosave_delay, timer_factory=timer_factory
        )
        store.on_mutate.append(self._on_mutate)

    # -- persistence ----------------------------------------------------------

    def _on_mutate(self, canvas_id: str) -> None:
        if self.workspace is not None and self.store.contains(canvas_id):
            self.autosaver.touch(canvas_id)

    def _save_now(self, canvas_id: str) -> None:
        if self.workspace is None or not self.store.contains(canvas_id):
            return
        try:
            with self.store.locked(canvas_id) as canvas:
                self.workspace.save(canvas)
        except OSError as exc:
            logger.warning("autosave of %s failed: %s", canvas_id, exc)
            self.store.emit(
                canvas_id,
                "session-warning",
                {"message": f"autosave failed: {exc}", "source": "autosave"},
            )

    def flush_saves(self) -> None:
        self.autosaver.flush()

    def close(self) -> None:
        self.orchestrator.shutdown_all()
        self.autosaver.close()

    def scan_workspace(self) -> list[str]:
        """Open every not-yet-bound workspace file; returns warnings for files
        that would not parse."""
        warnings: list[str] = []
        if self.workspace is None:
            return warnings
        for path in self.workspace.unbound_files():
            try:
                canvas = formats.parse_2dntb(path.read_bytes())
            except (OSError, formats.CodecError) as exc:
                warnings.append(f"{path.name}: {exc}")
                continue
            if self.store.contains(canvas.id):
                warnings.append(f"{path.name}: canvas {canvas.id} already open, skipped")
                continue
            self.store.add(canvas)
            self.workspace.bind(canvas.id, path)
        return warnings

    # -- canvas lifecycle -------------------------------------------------------

    def create_canvas(self, title: str = "Untitled", canvas_id: str | None = None) -> Canvas:
        canvas = self.store.create(title=title, canvas_id=canvas_id)
        if self.workspace is not None:
            self.workspace.bind(canvas.id)
            self._save_now(canvas.id)
        return canvas

    def delete_canvas(self, canvas_id: str) -> None:
        self.orchestrator.shutdown_canvas(canvas_id)
        self.autosaver.cancel(canvas_id)
        self.store.remove(canvas_id)
        if self.workspace is not None:
            self.workspace.forget(canvas_id, delete_file=True)

    def canvas_dict(self, canvas_id: str) -> dict:
        with self.store.locked(canvas_id) as canvas:
            return formats.canvas_to_dict(canvas)

    def canvas_state(self, canvas_id: str) -> dict:
        """Canvas dict plus the event sequence it is consistent with, so a
        client can subscribe to /events at from_seq=event_seq+1 gap-free."""
        with self.store.locked(canvas_id) as canvas:
            state = formats.canvas_to_dict(canvas)
            events = self.store.events_since(canvas_id)
            state["event_seq"] = events[-1].seq if events else 0
            return state

    def summaries(self) -> list[dict]:
        out = []
        for canvas_id in self.store.ids():
            with self.store.locked(canvas_id) as canvas:
                out.append(
                    {
                        "id": canvas.id,
                        "title": canvas.title,
                        "cells": len(canvas.cells),
                        "outputs": len(canvas.outputs),
                        "environments": len(canvas.environments),
                    }
                )
        return sorted(out, key=lambda s: s["id"])

    # -- cells ------------------------------------------------------------------

    def create_cell(self, canvas_id: str, source: str, frame: dict) -> Cell:
        rect = formats.rect_from_dict(frame)
        with self.store.locked(canvas_id) as canvas:
            cell = model.create_cell(canvas, source, rect)
            self.store.emit(
                canvas_id,
                "cell-created",
                {"cell": formats.cell_to_dict(cell), "next_seq": canvas.next_seq},
            )
        self.store.touched(canvas_id)
        return cell

    def update_cell(
        self, canvas_id: str, cell_id: str, source: str | None = None, frame: dict | None = None
    ) -> Cell:
        rect = formats.rect_from_dict(frame) if frame is not None else None
        with self.store.locked(canvas_id) as canvas:
            cell = canvas.cells.get(cell_id)
            if cell is None:
                raise model.UnknownEntityError(f"no cell {cell_id!r}")
            if source is not None:
                model.update_cell_source(canvas, cell_id, source)
                self.store.emit(
                    canvas_id, "cell-updated", {"cell": formats.cell_to_dict(cell)}
                )
            if rect is not None:
                model.set_cell_frame(canvas, cell_id, rect)
                self.store.emit(
                    canvas_id,
                    "cell-moved",
                    {"cell_id": cell_id, "frame": formats.rect_to_dict(rect)},
                )
        self.store.touched(canvas_id)
        return cell

    def delete_cell(self, canvas_id: str, cell_id: str) -> list[str]:
        with self.store.locked(canvas_id) as canvas:
            removed = model.delete_cell(canvas, cell_id)
            self.store.emit(
                canvas_id, "cell-deleted", {"cell_id": cell_id, "removed_output_ids": removed}
            )
        self.store.touched(canvas_id)
        return removed

    def execute_cell(
        self, canvas_id: str, cell_id: str, timeout: float | None = None
    ) -> ExecutionResult:
        self.store._entry(canvas_id)  # 404 before touching the orchestrator
        return self.orchestrator.execute_cell(canvas_id, cell_id, timeout=timeout)

    # -- environments --------------------------------------------------------------

    def create_environment(
        self, canvas_id: str, region: dict, color: str
    ) -> tuple[Environment, list[str]]:
        rect = formats.rect_from_dict(region)
        if not self.store.contains(canvas_id):
            raise model.UnknownEntityError(f"no canvas {canvas_id!r}")
        # Fork first: a canvas that cannot fork should not grow a dead region.
        session, warnings = self.orchestrator.fork_session(canvas_id)
        try:
            with self.store.locked(canvas_id) as canvas:
                env = model.create_environment(canvas, rect, color, session.session_id)
                self.store.emit(
                    canvas_id,
                    "env-created",
                    {
                        "environment": formats.environment_to_dict(env),
                        "warnings": warnings,
                        "next_seq": canvas.next_seq,
                    },
                )
        except model.ModelError:
            self.orchestrator.terminate_session(session.session_id)
            raise
        if warnings:
            self.store.emit(
                canvas_id,
                "session-warning",
                {
                    "message": "some variables could not be copied into the forked environment",
                    "names": warnings,
                    "environment_id": env.id,
                },
            )
        self.store.touched(canvas_id)
        return env, warnings

    def move_environment(self, canvas_id: str, env_id: str, dx: float, dy: float) -> Environment:
        with self.store.locked(canvas_id) as canvas:
            env, moved_cells, moved_outputs = model.move_environment(canvas, env_id, (dx, dy))
            self.store.emit(
                canvas_id,
                "env-moved",
                {
                    "environment_id": env_id,
                    "delta": {"dx": dx, "dy": dy},
                    "region": formats.rect_to_dict(env.region),
                    "moved_cells": [
                        {"id": c.id, "frame": formats.rect_to_dict(c.frame)} for c in moved_cells
                    ],
                    "moved_outputs": [
                        {"id": o.id, "frame": formats.rect_to_dict(o.frame)} for o in moved_outputs
                    ],
                },
            )
        self.store.touched(canvas_id)
        return env

    def delete_environment(self, canvas_id: str, env_id: str) -> None:
        with self.store.locked(canvas_id) as canvas:
            env = model.delete_environment(canvas, env_id)
            self.store.emit(canvas_id, "env-deleted", {"environment_id": env_id})
        self.orchestrator.terminate_session(env.session_id)
        self.store.touched(canvas_id)

    # -- outputs ----------------------------------------------------------------------

    def detach_output(self, canvas_id: str, output_id: str) -> OutputCell:
        with self.store.locked(canvas_id) as canvas:
            out = model.detach_output(canvas, output_id)
            self.store.emit(
                canvas_id, "output-detached", {"output": formats.output_to_dict(out)}
            )
        self.store.touched(canvas_id)
        return out

    def move_output(self, canvas_id: str, output_id: str, origin: dict) -> OutputCell:
        point = Point(origin["x"], origin["y"])
        with self.store.locked(canvas_id) as canvas:
            out = model.move_output(canvas, output_id, point)
            self.store.emit(
                canvas_id,
                "output-updated",
                {"output": formats.output_to_dict(out), "next_seq": canvas.next_seq},
            )
        self.store.touched(canvas_id)
        return out

    def delete_output(self, canvas_id: str, output_id: str) -> None:
        with self.store.locked(canvas_id) as canvas:
            model.delete_output(canvas, output_id)
            self.store.emit(canvas_id, "output-deleted", {"output_id": output_id})
        self.store.touched(canvas_id)

    # -- formats -------------------------------------------------------------------------

    def export_ipynb(self, canvas_id: str) -> tuple[dict, list[str]]:
        with self.store.locked(canvas_id) as canvas:
            return formats.export_ipynb(canvas)

    def import_ipynb(self, document: dict) -> Canvas:
        canvas = formats.import_ipynb(document)
        if self.store.contains(canvas.id):
            canvas.id = uuid.uuid4().hex  # same notebook imported twice
        self.store.add(canvas)
        if self.workspace is not None:
            self.workspace.bind(canvas.id)
            self._save_now(canvas.id)
        return canvas

    def file_bytes(self, canvas_id: str) -> bytes:
        with self.store.locked(canvas_id) as canvas:
            return formats.serialize_2dntb(canvas)

    def replace_from_bytes(self, canvas_id: str, data: bytes) -> Canvas:
        """Replace a canvas's content from ``.2dntb`` bytes; creates the canvas
        if the id is unknown. Adopts the id from the URL, not the file."""
        canvas = formats.parse_2dntb(data)
        canvas.id = canvas_id
        if self.store.contains(canvas_id):
            self.store.replace(canvas)
        else:
            self.store.add(canvas)
        if self.workspace is not None:
            self.workspace.bind(canvas_id)
        self.store.touched(canvas_id)
        return canvas
