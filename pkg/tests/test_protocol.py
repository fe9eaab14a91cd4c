from __future__ import annotations

import json
import random
import subprocess
import sys
import textwrap

import pytest
from hypothesis import given
from hypothesis import strategies as st

from codecanvas import protocol


def test_ping_frame_exact_bytes():
    frame = protocol.encode_frame({"id": 1, "op": "ping", "payload": {}})
    assert frame == b'{"id":1,"op":"ping","payload":{}}\n'


def test_decode_encode_roundtrip_simple():
    message = {"id": 3, "op": "execute", "payload": {"code": "x = 'café'  # π≈3.14159"}}
    assert protocol.decode_frame(protocol.encode_frame(message)) == message


_payloads = st.recursive(
    st.none() | st.booleans() | st.integers(-1000, 1000) | st.text(max_size=12),
    lambda children: st.lists(children, max_size=3)
    | st.dictionaries(st.text(max_size=6), children, max_size=3),
    max_leaves=10,
)


@given(
    op=st.sampled_from(sorted(protocol.REQUEST_OPS)),
    request_id=st.integers(1, 10**9),
    payload=st.dictionaries(st.text(max_size=8), _payloads, max_size=4),
)
def test_frame_roundtrip_property(op, request_id, payload):
    message = {"id": request_id, "op": op, "payload": payload}
    assert protocol.decode_frame(protocol.encode_frame(message)) == message


def test_oversize_frame_rejected_on_decode():
    blob = b"x" * (protocol.MAX_FRAME_BYTES + 1)
    with pytest.raises(protocol.FrameTooLargeError):
        protocol.decode_frame(blob)


def test_oversize_frame_rejected_on_encode():
    message = {"id": 1, "op": "execute", "payload": {"code": "y" * (protocol.MAX_FRAME_BYTES + 16)}}
    with pytest.raises(protocol.FrameTooLargeError):
        protocol.encode_frame(message)


def test_malformed_and_schema_violations():
    with pytest.raises(protocol.ProtocolError):
        protocol.decode_frame(b"{nope")
    with pytest.raises(protocol.SchemaViolationError):
        protocol.decode_request(b"[1,2,3]")
    with pytest.raises(protocol.SchemaViolationError):
        protocol.decode_request(b'{"id":0,"op":"ping","payload":{}}')
    with pytest.raises(protocol.SchemaViolationError):
        protocol.decode_request(b'{"id":1,"op":"reboot","payload":{}}')
    with pytest.raises(protocol.SchemaViolationError):
        protocol.decode_request(b'{"id":1,"op":"execute","payload":{}}')
    with pytest.raises(protocol.SchemaViolationError):
        protocol.decode_response(b'{"id":1,"payload":{}}')
    with pytest.raises(protocol.SchemaViolationError):
        protocol.decode_response(b'{"id":1,"ok":true,"payload":{},"extra":1}')


def test_handshake_success():
    assert protocol.handshake(lambda timeout: b'{"ready":"1"}\n') == "1"


def test_handshake_garbage_first_line():
    with pytest.raises(protocol.HandshakeError):
        protocol.handshake(lambda timeout: b"hello world\n")


def test_handshake_version_mismatch():
    with pytest.raises(protocol.HandshakeError) as err:
        protocol.handshake(lambda timeout: b'{"ready":"2"}\n')
    assert err.value.code == "version-mismatch"


def test_handshake_timeout():
    with pytest.raises(protocol.HandshakeError) as err:
        protocol.handshake(lambda timeout: None, timeout=0.01)
    assert err.value.code == "handshake-timeout"


# A scripted fake worker that batches its responses unpredictably but always
# answers in request order, exactly one response per request.
_FAKE_WORKER = textwrap.dedent(
    """
    import json, random, sys
    seed = int(sys.argv[1])
    rng = random.Random(seed)
    print(json.dumps({"ready": "1"}), flush=True)
    pending = []
    for line in sys.stdin:
        msg = json.loads(line)
        if msg["op"] == "shutdown":
            pending.append({"id": msg["id"], "ok": True, "payload": {}})
            for resp in pending:
                print(json.dumps(resp), flush=True)
            break
        pending.append({"id": msg["id"], "ok": True, "payload": {"echo": msg["op"]}})
        if rng.random() < 0.6:
            for resp in pending:
                print(json.dumps(resp), flush=True)
            pending = []
    """
)


@pytest.mark.parametrize("seed", range(6))
def test_pipelined_requests_pair_in_order(seed):
    rng = random.Random(seed)
    proc = subprocess.Popen(
        [sys.executable, "-c", _FAKE_WORKER, str(seed)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        assert protocol.handshake(lambda t: proc.stdout.readline()) == "1"
        ops = [rng.choice(["ping", "snapshot"]) for _ in range(rng.randint(3, 12))]
        sent = []
        for index, op in enumerate(ops, start=1):
            proc.stdin.write(
                protocol.encode_frame({"id": index, "op": op, "payload": {}}).decode()
            )
            sent.append(index)
        proc.stdin.write(
            protocol.encode_frame(
                {"id": len(ops) + 1, "op": "shutdown", "payload": {}}
            ).decode()
        )
        proc.stdin.flush()
        received = []
        while len(received) < len(ops) + 1:
            response = protocol.decode_response(proc.stdout.readline())
            received.append(response["id"])
        assert received == sent + [len(ops) + 1]  # in-order, one-to-one
        assert len(set(received)) == len(received)
    finally:
        proc.kill()
        proc.wait()
