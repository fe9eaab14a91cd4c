"""Stateful interpreter worker.

Runs as a child process (``python -m codecanvas.worker``) speaking the
NDJSON protocol over its standard streams. It executes code fragments
against a persistent namespace, captures stdout/stderr separately, collects
rich output emitted through the injected ``canvas_display(mime, data)``
helper, and can snapshot/restore its variable state so the orchestrator can
fork sessions.

Exit codes: 0 after a clean shutdown request, nonzero on protocol failure.
"""

from __future__ import annotations

import ast
import base64
import builtins
import contextlib
import io
import importlib
import pickle
import sys
import traceback
import types
from typing import Any, TextIO

from . import protocol
from .model import OutputItem

RESULT_REPR_CAP = 100 * 1024
STREAM_CAP = 16 * 1024 * 1024
# Leave generous headroom under the frame cap for JSON escaping overhead.
PAYLOAD_BUDGET = protocol.MAX_FRAME_BYTES // 2

_NAMESPACE_MODULE = "__canvas__"
_HELPER_NAME = "canvas_display"


def _is_internal(name: str) -> bool:
    return name.startswith("__") or name == _HELPER_NAME


def _clip(text: str, cap: int, label: str) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + f"\n...[{label} truncated at {cap} characters]\n"


class WorkerState:
    """Persistent namespace plus the execute/snapshot/restore operations."""

    def __init__(self):
        self._rich: list[dict] = []
        self.namespace: dict[str, Any] = {}
        self._install_namespace({})

    def _install_namespace(self, user_bindings: dict[str, Any]) -> None:
        ns: dict[str, Any] = {
            "__name__": _NAMESPACE_MODULE,
            "__builtins__": builtins,
            _HELPER_NAME: self._display,
        }
        ns.update(user_bindings)
        self.namespace = ns

    def _display(self, mime: str, data: Any) -> None:
        # Validates against the same rules the document model enforces, so a
        # bad mime or broken base64 fails inside the user's execution.
        item = OutputItem(mime, data if isinstance(data, str) else str(data))
        self._rich.append({"mime": item.mime, "data": item.data})

    def user_bindings(self) -> dict[str, Any]:
        return {k: v for k, v in self.namespace.items() if not _is_internal(k)}

    # -- execute ------------------------------------------------------------

    def execute(self, code: str) -> tuple[bool, dict]:
        self._rich = []
        stdout_buf = io.StringIO()
        stderr_buf = io.StringIO()
        result_repr: str | None = None
        error: dict | None = None

        try:
            tree = ast.parse(code, "<cell>", "exec")
        except SyntaxError as exc:
            error = {
                "etype": type(exc).__name__,
                "message": str(exc),
                "traceback": "".join(traceback.format_exception_only(type(exc), exc)),
            }
            return False, self._execute_payload("", "", None, error)

        # Statements run one at a time so bindings made before a failing
        # statement survive it.
        with contextlib.redirect_stdout(stdout_buf), contextlib.redirect_stderr(stderr_buf):
            stdin_guard = sys.stdin
            sys.stdin = io.StringIO()
            try:
                for index, node in enumerate(tree.body):
                    is_last = index == len(tree.body) - 1
                    try:
                        if is_last and isinstance(node, ast.Expr):
                            value = eval(
                                compile(ast.Expression(node.value), "<cell>", "eval"),
                                self.namespace,
                            )
                            if value is not None:
                                result_repr = _clip(repr(value), RESULT_REPR_CAP, "result")
                        else:
                            exec(
                                compile(ast.Module([node], type_ignores=[]), "<cell>", "exec"),
                                self.namespace,
                            )
                    except BaseException as exc:
                        tb = exc.__traceback__
                        error = {
                            "etype": type(exc).__name__,
                            "message": str(exc),
                            "traceback": "".join(
                                traceback.format_exception(
                                    type(exc), exc, tb.tb_next if tb else None
                                )
                            ),
                        }
                        break
            finally:
                sys.stdin = stdin_guard

        payload = self._execute_payload(
            stdout_buf.getvalue(), stderr_buf.getvalue(), result_repr, error
        )
        return error is None, payload

    def _execute_payload(
        self, stdout: str, stderr: str, result_repr: str | None, error: dict | None
    ) -> dict:
        payload = {
            "stdout": _clip(stdout, STREAM_CAP, "stdout"),
            "stderr": _clip(stderr, STREAM_CAP, "stderr"),
            "result_repr": result_repr,
            "rich": list(self._rich),
            "error": error,
        }
        return self._fit_payload(payload)

    def _fit_payload(self, payload: dict) -> dict:
        if self._payload_size(payload) <= PAYLOAD_BUDGET:
            return payload
        hard_cap = 1024 * 1024
        payload["stdout"] = _clip(payload["stdout"], hard_cap, "stdout")
        payload["stderr"] = _clip(payload["stderr"], hard_cap, "stderr")
        if self._payload_size(payload) > PAYLOAD_BUDGET:
            dropped = len(payload["rich"])
            payload["rich"] = []
            payload["stderr"] += f"\n...[{dropped} rich output item(s) dropped: result too large]\n"
        return payload

    @staticmethod
    def _payload_size(payload: dict) -> int:
        try:
            return len(protocol.encode_frame({"id": 1, "ok": True, "payload": payload}))
        except protocol.FrameTooLargeError:
            return protocol.MAX_FRAME_BYTES + 1

    # -- snapshot / restore ---------------------------------------------------

    def snapshot(self) -> dict:
        modules: dict[str, str] = {}
        values: dict[str, Any] = {}
        skipped: list[str] = []
        sizes: dict[str, int] = {}
        for name, value in self.user_bindings().items():
            if isinstance(value, types.ModuleType):
                modules[name] = value.__name__
                continue
            try:
                sizes[name] = len(pickle.dumps(value, protocol=pickle.HIGHEST_PROTOCOL))
            except Exception:
                skipped.append(name)
                continue
            values[name] = value

        # Values are pickled together so aliasing between names survives the
        # round trip; drop offenders one by one in the rare case the combined
        # dump fails or the blob would blow the frame budget.
        while True:
            try:
                blob = pickle.dumps(
                    {"modules": modules, "values": values},
                    protocol=pickle.HIGHEST_PROTOCOL,
                )
            except Exception:
                blob = None
            if blob is not None and len(blob) * 4 // 3 <= PAYLOAD_BUDGET:
                break
            if not values:
                blob = pickle.dumps(
                    {"modules": modules, "values": {}}, protocol=pickle.HIGHEST_PROTOCOL
                )
                break
            biggest = max(values, key=lambda n: sizes.get(n, 0))
            del values[biggest]
            skipped.append(biggest)

        return {
            "blob": base64.b64encode(blob).decode("ascii"),
            "skipped": sorted(skipped),
        }

    def restore(self, blob_b64: str) -> tuple[bool, dict]:
        try:
            raw = base64.b64decode(blob_b64, validate=True)
            payload = pickle.loads(raw)
            modules = dict(payload["modules"])
            values = dict(payload["values"])
        except Exception as exc:
            # Namespace is untouched on a corrupt blob.
            return False, {
                "error": {
                    "etype": type(exc).__name__,
                    "message": f"could not restore snapshot: {exc}",
                    "traceback": "",
                }
            }
        skipped: list[str] = []
        bindings: dict[str, Any] = {}
        for name, import_path in modules.items():
            try:
                bindings[name] = importlib.import_module(import_path)
            except Exception:
                skipped.append(name)
        bindings.update(values)
        self._install_namespace(bindings)
        return True, {"skipped": sorted(skipped)}


def _write_frame(output_stream: TextIO, message: dict) -> None:
    output_stream.write(protocol.encode_frame(message).decode("ascii"))
    output_stream.flush()


def run_loop(input_stream: TextIO, output_stream: TextIO) -> int:
    """Serve protocol requests until shutdown; returns the process exit code."""
    _write_frame(output_stream, {"ready": protocol.PROTOCOL_VERSION})
    state = WorkerState()
    last_id = 0
    for line in input_stream:
        if not line.strip():
            continue
        try:
            request = protocol.decode_request(line)
        except protocol.ProtocolError as exc:
            print(f"worker: protocol violation: {exc}", file=sys.stderr)
            return 2
        if request["id"] <= last_id:
            print(
                f"worker: request id {request['id']} not above {last_id}", file=sys.stderr
            )
            return 2
        last_id = request["id"]

        op = request["op"]
        if op == "ping":
            ok, payload = True, {"protocol": protocol.PROTOCOL_VERSION}
        elif op == "execute":
            ok, payload = state.execute(request["payload"]["code"])
        elif op == "snapshot":
            ok, payload = True, state.snapshot()
        elif op == "restore":
            ok, payload = state.restore(request["payload"]["blob"])
        else:  # shutdown
            _write_frame(output_stream, {"id": request["id"], "ok": True, "payload": {}})
            return 0
        _write_frame(output_stream, {"id": request["id"], "ok": ok, "payload": payload})
    # Input closed without a shutdown request: abnormal termination.
    print("worker: input stream closed before shutdown", file=sys.stderr)
    return 1


def main() -> None:
    for stream in (sys.stdin, sys.stdout):
        reconfigure = getattr(stream, "reconfigure", None)
        if reconfigure is not None:
            reconfigure(encoding="utf-8")
    sys.exit(run_loop(sys.stdin, sys.stdout))


if __name__ == "__main__":
    main()
