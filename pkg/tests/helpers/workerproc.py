"""Thin synchronous driver for one interpreter-worker subprocess."""

from __future__ import annotations

import subprocess
import sys

from codecanvas import protocol

from helpers.progen import PROBE_EXPR


class WorkerProc:
    def __init__(self):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "codecanvas.worker"],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        self.version = protocol.handshake(lambda t: self.proc.stdout.readline())
        self._next_id = 1

    def request(self, op: str, payload: dict | None = None) -> dict:
        request_id = self._next_id
        self._next_id += 1
        frame = protocol.encode_frame({"id": request_id, "op": op, "payload": payload or {}})
        self.proc.stdin.write(frame.decode())
        self.proc.stdin.flush()
        response = protocol.decode_response(self.proc.stdout.readline())
        assert response["id"] == request_id
        return response

    def execute(self, code: str) -> dict:
        return self.request("execute", {"code": code})

    def probe(self) -> str:
        response = self.execute(PROBE_EXPR)
        assert response["ok"], response
        return response["payload"]["result_repr"]

    def shutdown(self) -> int:
        self.request("shutdown")
        return self.proc.wait(timeout=10)

    def kill(self):
        self.proc.kill()
        self.proc.wait()
