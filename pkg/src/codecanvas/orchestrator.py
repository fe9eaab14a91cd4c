"""Runtime session orchestration for canvases.

Each canvas owns at most one main session (created lazily on the first
execution) plus any number of environment sessions forked from main via
snapshot/restore into a fresh worker process. Every session runs one worker
subprocess and a dispatch thread draining a FIFO job queue, so executions
within a session are strictly serial while distinct sessions run genuinely
in parallel.

Cell executions are routed geometrically at dispatch time (center-point
containment, latest region wins) and their results written back into the
document store under the canvas lock, emitting canvas events.
"""

from __future__ import annotations

import collections
import queue
import subprocess
import sys
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass
from typing import Callable

from . import model, protocol
from .documents import DocumentStore
from .formats import output_to_dict
from .model import OutputItem

TERMINATE_GRACE = 5.0
CONTROL_TIMEOUT = 60.0


class SessionError(Exception):
    code = "session-error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class SpawnError(SessionError):
    code = "spawn-failed"


class ForkError(SessionError):
    code = "fork-failed"


class SessionDeadError(SessionError):
    code = "environment-terminated"


class WorkerFailedError(SessionError):
    code = "worker-failure"


def default_worker_command() -> list[str]:
    return [sys.executable, "-m", "codecanvas.worker"]


@dataclass
class ExecutionResult:
    status: str  # "ok" | "error"
    bundle: tuple[OutputItem, ...]
    execution_count: int
    duration_ms: float

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "bundle": [{"mime": i.mime, "data": i.data} for i in self.bundle],
            "execution_count": self.execution_count,
            "duration_ms": self.duration_ms,
        }


def _bundle_from_payload(payload: dict) -> tuple[OutputItem, ...]:
    items: list[OutputItem] = []
    if payload.get("stdout"):
        items.append(OutputItem("stream/stdout", payload["stdout"]))
    if payload.get("stderr"):
        items.append(OutputItem("stream/stderr", payload["stderr"]))
    for rich in payload.get("rich") or []:
        items.append(OutputItem(rich["mime"], rich["data"]))
    if payload.get("result_repr") is not None:
        items.append(OutputItem("text/plain", payload["result_repr"]))
    error = payload.get("error")
    if error:
        text = error.get("traceback") or "{}: {}\n".format(
            error.get("etype", "Error"), error.get("message", "")
        )
        items.append(OutputItem("stream/stderr", text))
    return tuple(items)


class WorkerClient:
    """Owns one worker subprocess and its protocol connection."""

    def __init__(self, command: list[str]):
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                encoding="utf-8",
            )
        except OSError as exc:
            raise SpawnError(f"could not start worker {command!r}: {exc}")
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._stderr_tail: collections.deque[str] = collections.deque(maxlen=50)
        self._write_lock = threading.Lock()
        self._next_id = 1
        threading.Thread(target=self._read_stdout, daemon=True).start()
        threading.Thread(target=self._read_stderr, daemon=True).start()

    def _read_stdout(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _read_stderr(self) -> None:
        assert self._proc.stderr is not None
        for line in self._proc.stderr:
            self._stderr_tail.append(line)

    def _next_line(self, timeout: float | None) -> str | None:
        try:
            return self._lines.get(timeout=timeout)
        except queue.Empty:
            return None

    def handshake(self, timeout: float = protocol.HANDSHAKE_TIMEOUT) -> str:
        try:
            return protocol.handshake(self._next_line, timeout)
        except protocol.HandshakeError:
            self.kill()
            raise

    def stderr_tail(self) -> str:
        return "".join(self._stderr_tail)

    @property
    def alive(self) -> bool:
        return self._proc.poll() is None

    def request(self, op: str, payload: dict | None = None, timeout: float | None = None) -> dict:
        """Send one request and block for its response (strictly in-order)."""
        with self._write_lock:
            request_id = self._next_id
            self._next_id += 1
            frame = protocol.encode_frame(
                {"id": request_id, "op": op, "payload": payload or {}}
            )
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(frame.decode("ascii"))
                self._proc.stdin.flush()
            except (OSError, ValueError) as exc:
                raise WorkerFailedError(f"worker pipe closed: {exc}; {self.stderr_tail()}")
        line = self._next_line(timeout)
        if line is None:
            raise WorkerFailedError(
                f"worker exited or timed out during {op!r}; stderr: {self.stderr_tail()}"
            )
        try:
            response = protocol.decode_response(line)
        except protocol.ProtocolError as exc:
            raise WorkerFailedError(f"bad response frame: {exc}")
        if response["id"] != request_id:
            raise WorkerFailedError(
                f"response id {response['id']} does not match request {request_id}"
            )
        return response

    def send_shutdown(self) -> None:
        with self._write_lock:
            request_id = self._next_id
            self._next_id += 1
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(
                    protocol.encode_frame({"id": request_id, "op": "shutdown", "payload": {}}).decode("ascii")
                )
                self._proc.stdin.flush()
            except (OSError, ValueError):
                pass

    def terminate(self, grace: float = TERMINATE_GRACE) -> None:
        if self.alive:
            self.send_shutdown()
            try:
                self._proc.wait(timeout=grace)
            except subprocess.TimeoutExpired:
                self.kill()
        self._close_pipes()

    def kill(self) -> None:
        if self.alive:
            self._proc.kill()
            try:
                self._proc.wait(timeout=TERMINATE_GRACE)
            except subprocess.TimeoutExpired:
                pass
        self._close_pipes()

    def _close_pipes(self) -> None:
        for pipe in (self._proc.stdin, self._proc.stdout, self._proc.stderr):
            try:
                if pipe is not None:
                    pipe.close()
            except OSError:
                pass


_SENTINEL = object()

Job = Callable[["Session"], object]


class Session:
    """A live interpreter session: worker process + FIFO dispatch thread."""

    def __init__(
        self,
        session_id: str,
        canvas_id: str,
        parent_session_id: str | None,
        client: WorkerClient,
    ):
        self.session_id = session_id
        self.canvas_id = canvas_id
        self.parent_session_id = parent_session_id
        self.client = client
        self.exec_counter = 1  # next execution count to hand out
        self.state = "idle"
        self._jobs: queue.SimpleQueue = queue.SimpleQueue()
        self._thread = threading.Thread(
            target=self._dispatch_loop, name=f"session-{session_id}", daemon=True
        )
        self._thread.start()

    def info(self) -> dict:
        return {
            "session_id": self.session_id,
            "canvas_id": self.canvas_id,
            "parent_session_id": self.parent_session_id,
            "exec_counter": self.exec_counter,
            "state": self.state,
        }

    def next_count(self) -> int:
        count = self.exec_counter
        self.exec_counter += 1
        return count

    def submit(self, job: Job) -> Future:
        if self.state == "dead":
            raise SessionDeadError(f"environment terminated ({self.session_id})")
        future: Future = Future()
        self._jobs.put((job, future))
        return future

    def _dispatch_loop(self) -> None:
        while True:
            item = self._jobs.get()
            if item is _SENTINEL:
                break
            job, future = item
            if self.state == "dead":
                future.set_exception(
                    SessionDeadError(f"environment terminated ({self.session_id})")
                )
                continue
            self.state = "busy"
            try:
                future.set_result(job(self))
            except WorkerFailedError as exc:
                self.state = "dead"
                future.set_exception(exc)
            except Exception as exc:
                future.set_exception(exc)
            finally:
                if self.state != "dead":
                    self.state = "idle"

    def close(self) -> None:
        self.state = "dead"
        self.client.terminate()
        self._jobs.put(_SENTINEL)


class Orchestrator:
    """Owns every runtime session; safe for concurrent API calls."""

    def __init__(self, store: DocumentStore, worker_command: list[str] | None = None):
        self._store = store
        self._command = worker_command or default_worker_command()
        self._sessions: dict[str, Session] = {}
        self._lock = threading.RLock()
        self._fork_counts: dict[str, int] = {}
        self._binding_lock = threading.Lock()

    # -- session lifecycle ----------------------------------------------------

    def main_session_id(self, canvas_id: str) -> str:
        return f"{canvas_id}:main"

    def get_session(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)

    def sessions_for_canvas(self, canvas_id: str) -> list[Session]:
        with self._lock:
            return [s for s in self._sessions.values() if s.canvas_id == canvas_id]

    def _spawn(self, session_id: str, canvas_id: str, parent: str | None) -> Session:
        client = WorkerClient(self._command)
        try:
            client.handshake()
        except protocol.HandshakeError as exc:
            raise SpawnError(f"worker handshake failed: {exc}")
        return Session(session_id, canvas_id, parent, client)

    def ensure_main_session(self, canvas_id: str) -> Session:
        """Idempotent: the main session is spawned on first use only."""
        with self._lock:
            existing = self._sessions.get(self.main_session_id(canvas_id))
            if existing is not None:
                return existing
            session = self._spawn(self.main_session_id(canvas_id), canvas_id, None)
            self._sessions[session.session_id] = session
            return session

    def fork_session(self, canvas_id: str) -> tuple[Session, list[str]]:
        """Fork the main session. The snapshot rides the main FIFO queue, so
        the fork point is always a consistent state between executions."""
        main = self.ensure_main_session(canvas_id)
        try:
            snap = main.submit(
                lambda s: s.client.request("snapshot", timeout=CONTROL_TIMEOUT)
            ).result()
        except SessionError:
            raise
        except Exception as exc:
            raise ForkError(f"snapshot of main session failed: {exc}")
        if not snap["ok"]:
            raise ForkError(f"snapshot of main session failed: {snap['payload']}")
        warnings = list(snap["payload"].get("skipped", []))

        with self._lock:
            self._fork_counts[canvas_id] = self._fork_counts.get(canvas_id, 0) + 1
            child_id = f"{canvas_id}:fork-{self._fork_counts[canvas_id]}"
        child = self._spawn(child_id, canvas_id, main.session_id)
        try:
            restored = child.submit(
                lambda s: s.client.request(
                    "restore", {"blob": snap["payload"]["blob"]}, timeout=CONTROL_TIMEOUT
                )
            ).result()
            if not restored["ok"]:
                raise ForkError(f"restore into forked worker failed: {restored['payload']}")
        except SessionError as exc:
            child.close()
            raise ForkError(f"restore into forked worker failed: {exc}")
        except ForkError:
            child.close()
            raise
        warnings += list(restored["payload"].get("skipped", []))
        with self._lock:
            self._sessions[child.session_id] = child
        return child, warnings

    def terminate_session(self, session_id: str) -> None:
        """Idempotent; queued jobs fail with an environment-terminated error."""
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None or session.state == "dead":
            return
        session.close()

    def shutdown_canvas(self, canvas_id: str) -> None:
        for session in self.sessions_for_canvas(canvas_id):
            self.terminate_session(session.session_id)

    def shutdown_all(self) -> None:
        with self._lock:
            sessions = list(self._sessions.values())
        for session in sessions:
            self.terminate_session(session.session_id)

    # -- execution --------------------------------------------------------------

    def run_code(
        self, session_id: str, code: str, timeout: float | None = None
    ) -> ExecutionResult:
        """Run raw code on a session, without any document write-back."""
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise SessionDeadError(f"no session {session_id!r}")
        return session.submit(self._raw_job(code)).result(timeout)

    @staticmethod
    def _raw_job(code: str) -> Job:
        def job(session: Session) -> ExecutionResult:
            count = session.next_count()
            started = time.monotonic()
            response = session.client.request("execute", {"code": code})
            duration_ms = (time.monotonic() - started) * 1000.0
            return ExecutionResult(
                status="ok" if response["ok"] else "error",
                bundle=_bundle_from_payload(response["payload"]),
                execution_count=count,
                duration_ms=duration_ms,
            )

        return job

    def _session_for_cell(self, canvas_id: str, cell_id: str) -> Session:
        with self._store.locked(canvas_id) as canvas:
            env_id = model.resolve_environment(canvas, cell_id)
            env_session_id = (
                None if env_id == model.MAIN else canvas.environments[env_id].session_id
            )
        if env_id == model.MAIN:
            return self.ensure_main_session(canvas_id)
        with self._lock:
            session = self._sessions.get(env_session_id or "")
        if session is not None:
            return session
        # The region's session id is unknown to this process (canvas loaded
        # from disk): fork now and rebind, preserving fork-from-main order
        # relative to everything already executed.
        with self._binding_lock:
            with self._store.locked(canvas_id) as canvas:
                env = canvas.environments.get(env_id)
                if env is None:
                    raise model.UnknownEntityError(f"no environment {env_id!r}")
                current = env.session_id
            with self._lock:
                session = self._sessions.get(current)
            if session is not None:
                return session
            session, warnings = self.fork_session(canvas_id)

            def rebind(canvas: model.Canvas):
                env = canvas.environments.get(env_id)
                if env is not None:
                    env.session_id = session.session_id

            self._store.mutate(canvas_id, rebind)
            if warnings:
                self._store.emit(
                    canvas_id,
                    "session-warning",
                    {
                        "message": "some variables could not be copied into the forked environment",
                        "names": warnings,
                        "environment_id": env_id,
                    },
                )
        return session

    def submit_cell(self, canvas_id: str, cell_id: str) -> Future:
        """Queue a cell execution on its routed session; returns a future
        resolving to the ExecutionResult once the write-back has happened."""
        session = self._session_for_cell(canvas_id, cell_id)
        store = self._store

        def job(session: Session) -> ExecutionResult:
            with store.locked(canvas_id) as canvas:
                cell = canvas.cells.get(cell_id)
                if cell is None:
                    raise model.UnknownEntityError(f"no cell {cell_id!r}")
                source = cell.source
            count = session.next_count()
            store.emit(
                canvas_id,
                "execution-started",
                {
                    "cell_id": cell_id,
                    "session_id": session.session_id,
                    "execution_count": count,
                },
            )
            started = time.monotonic()
            response = session.client.request("execute", {"code": source})
            duration_ms = (time.monotonic() - started) * 1000.0
            result = ExecutionResult(
                status="ok" if response["ok"] else "error",
                bundle=_bundle_from_payload(response["payload"]),
                execution_count=count,
                duration_ms=duration_ms,
            )

            def write_back(canvas: model.Canvas):
                cell = canvas.cells.get(cell_id)
                if cell is None:
                    return None  # deleted while running; result still returned
                cell.execution_count = count
                output = model.attach_or_update_output(
                    canvas, cell_id, result.bundle, (session.session_id, count)
                )
                return output, canvas.next_seq

            written = store.mutate(canvas_id, write_back)
            if written is not None:
                output, next_seq = written
                store.emit(
                    canvas_id,
                    "output-updated",
                    {"output": output_to_dict(output), "next_seq": next_seq},
                )
            store.emit(
                canvas_id,
                "execution-finished",
                {
                    "cell_id": cell_id,
                    "session_id": session.session_id,
                    "execution_count": count,
                    "status": result.status,
                    "duration_ms": duration_ms,
                },
            )
            return result

        return session.submit(job)

    def execute_cell(
        self, canvas_id: str, cell_id: str, timeout: float | None = None
    ) -> ExecutionResult:
        return self.submit_cell(canvas_id, cell_id).result(timeout)
