"""Framed wire protocol between the orchestrator and interpreter workers.

One JSON object per LF-terminated line over the worker's standard streams,
in both directions. All binary content travels base64-encoded inside JSON
strings. Frames above 64 MiB are rejected outright; workers truncate big
execution results on their side so well-behaved peers never hit the cap.
"""

from __future__ import annotations

import json
from typing import Any, Callable

PROTOCOL_VERSION = "1"
MAX_FRAME_BYTES = 64 * 1024 * 1024
HANDSHAKE_TIMEOUT = 5.0

REQUEST_OPS = frozenset({"execute", "snapshot", "restore", "ping", "shutdown"})


class ProtocolError(Exception):
    code = "protocol-error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class FrameTooLargeError(ProtocolError):
    code = "frame-too-large"


class SchemaViolationError(ProtocolError):
    code = "schema-violation"


class HandshakeError(ProtocolError):
    code = "handshake-failed"


def encode_frame(message: dict) -> bytes:
    """Encode one message as an LF-terminated JSON line."""
    data = json.dumps(message, ensure_ascii=True, separators=(",", ":")).encode("ascii")
    if len(data) + 1 > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame of {len(data)} bytes exceeds {MAX_FRAME_BYTES}")
    return data + b"\n"


def decode_frame(line: bytes | str) -> dict:
    """Decode one line into a message object (no direction-specific checks)."""
    if isinstance(line, str):
        line = line.encode("utf-8")
    if len(line) > MAX_FRAME_BYTES:
        raise FrameTooLargeError(f"frame of {len(line)} bytes exceeds {MAX_FRAME_BYTES}")
    try:
        message = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed frame: {exc}", code="malformed-frame")
    if not isinstance(message, dict):
        raise SchemaViolationError("frame must be a JSON object")
    return message


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SchemaViolationError(message)


def validate_request(message: dict) -> dict:
    _require(isinstance(message.get("id"), int) and not isinstance(message.get("id"), bool), "request id must be an integer")
    _require(message["id"] >= 1, "request id must be positive")
    op = message.get("op")
    _require(op in REQUEST_OPS, f"unknown op {op!r}")
    payload = message.get("payload")
    _require(isinstance(payload, dict), "payload must be an object")
    if op == "execute":
        _require(isinstance(payload.get("code"), str), "execute payload needs code text")
    elif op == "restore":
        _require(isinstance(payload.get("blob"), str), "restore payload needs a blob string")
    _require(set(message) == {"id", "op", "payload"}, "request has extraneous fields")
    return message


def validate_response(message: dict) -> dict:
    _require(isinstance(message.get("id"), int) and not isinstance(message.get("id"), bool), "response id must be an integer")
    _require(message["id"] >= 1, "response id must be positive")
    _require(isinstance(message.get("ok"), bool), "response needs an ok flag")
    _require(isinstance(message.get("payload"), dict), "payload must be an object")
    _require(set(message) == {"id", "ok", "payload"}, "response has extraneous fields")
    return message


def decode_request(line: bytes | str) -> dict:
    return validate_request(decode_frame(line))


def decode_response(line: bytes | str) -> dict:
    return validate_response(decode_frame(line))


def ready_line() -> bytes:
    """The first line a worker must emit after starting."""
    return encode_frame({"ready": PROTOCOL_VERSION})


def handshake(
    read_line: Callable[[float], Any], timeout: float = HANDSHAKE_TIMEOUT
) -> str:
    """Consume the worker's ready line and return the protocol version.

    ``read_line(timeout)`` must return the next line (str/bytes) or None if
    nothing arrived in time. A silent, garbled or incompatible worker is a
    handshake failure; callers should abort the worker on any of these.
    """
    line = read_line(timeout)
    if line is None:
        raise HandshakeError(f"worker produced no handshake within {timeout}s", code="handshake-timeout")
    try:
        message = decode_frame(line)
    except ProtocolError:
        raise HandshakeError(f"handshake line is not a protocol frame: {line!r}")
    version = message.get("ready")
    if not isinstance(version, str):
        raise HandshakeError(f"handshake frame lacks a ready field: {message!r}")
    if version != PROTOCOL_VERSION:
        raise HandshakeError(
            f"worker speaks protocol {version!r}, need {PROTOCOL_VERSION!r}",
            code="version-mismatch",
        )
    return version
