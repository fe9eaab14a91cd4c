from __future__ import annotations

import base64
import pickle

import pytest

from codecanvas import protocol

from helpers.progen import generate_program, generate_split
from helpers.workerproc import WorkerProc


@pytest.fixture
def worker():
    w = WorkerProc()
    yield w
    w.kill()


def test_handshake_and_ping(worker):
    assert worker.version == "1"
    response = worker.request("ping")
    assert response["ok"] and response["payload"] == {"protocol": "1"}


def test_shutdown_as_first_request_exits_cleanly():
    w = WorkerProc()
    assert w.shutdown() == 0


def test_abrupt_stream_close_is_nonzero_exit():
    w = WorkerProc()
    w.proc.stdin.close()
    assert w.proc.wait(timeout=10) != 0


def test_garbage_request_terminates_nonzero():
    w = WorkerProc()
    w.proc.stdin.write("this is not json\n")
    w.proc.stdin.flush()
    assert w.proc.wait(timeout=10) == 2


def test_non_increasing_ids_rejected():
    w = WorkerProc()
    w.request("ping")
    w._next_id = 1  # reuse an id
    w.proc.stdin.write(
        protocol.encode_frame({"id": 1, "op": "ping", "payload": {}}).decode()
    )
    w.proc.stdin.flush()
    assert w.proc.wait(timeout=10) == 2


def test_state_persists_across_executes(worker):
    assert worker.execute("x = 1")["ok"]
    response = worker.execute("x + 1")
    assert response["payload"]["result_repr"] == "2"


def test_print_goes_to_stdout_without_result(worker):
    payload = worker.execute('print("hi")')["payload"]
    assert payload["stdout"] == "hi\n"
    assert payload["result_repr"] is None


def test_stdout_stderr_separation(worker):
    payload = worker.execute(
        'import sys\nprint("to-out")\nprint("to-err", file=sys.stderr)'
    )["payload"]
    assert "to-out" in payload["stdout"] and "to-out" not in payload["stderr"]
    assert "to-err" in payload["stderr"] and "to-err" not in payload["stdout"]


def test_bindings_before_failure_persist(worker):
    response = worker.execute("y = 5\n1/0")
    assert not response["ok"]
    error = response["payload"]["error"]
    assert error["etype"] == "ZeroDivisionError"
    assert "line 2" in error["traceback"]
    assert worker.execute("y")["payload"]["result_repr"] == "5"


def test_syntax_error_reported_not_fatal(worker):
    response = worker.execute("def broken(:")
    assert not response["ok"]
    assert response["payload"]["error"]["etype"] == "SyntaxError"
    assert worker.execute("1 + 1")["payload"]["result_repr"] == "2"


def test_none_expression_has_no_result(worker):
    assert worker.execute("None")["payload"]["result_repr"] is None


def test_rich_output_in_call_order(worker):
    code = (
        'canvas_display("text/plain", "first")\n'
        'canvas_display("application/json", \'{"n": 2}\')\n'
        "3"
    )
    payload = worker.execute(code)["payload"]
    assert payload["rich"] == [
        {"mime": "text/plain", "data": "first"},
        {"mime": "application/json", "data": '{"n": 2}'},
    ]
    assert payload["result_repr"] == "3"


def test_rich_output_bad_mime_is_user_error(worker):
    response = worker.execute('canvas_display("video/mp4", "x")')
    assert not response["ok"]


def test_input_is_refused_not_hung(worker):
    response = worker.execute("input()")
    assert not response["ok"]
    assert response["payload"]["error"]["etype"] == "EOFError"


def test_large_result_repr_truncated(worker):
    payload = worker.execute("'a' * (200 * 1024)")["payload"]
    assert len(payload["result_repr"]) < 150 * 1024
    assert "truncated" in payload["result_repr"]


# -- snapshot / restore -------------------------------------------------------


def test_snapshot_restore_roundtrip():
    first = WorkerProc()
    first.execute("x = 1\ns = 'a'\nl = [1, 2]")
    snap = first.request("snapshot")
    assert snap["ok"] and snap["payload"]["skipped"] == []
    first.kill()

    second = WorkerProc()
    restored = second.request("restore", {"blob": snap["payload"]["blob"]})
    assert restored["ok"] and restored["payload"]["skipped"] == []
    assert second.execute("(x, s, l)")["payload"]["result_repr"] == "(1, 'a', [1, 2])"
    second.kill()


def test_snapshot_skips_unserializable_values(worker):
    worker.execute("f = open('/dev/null')\nok_value = 7")
    payload = worker.request("snapshot")["payload"]
    assert "f" in payload["skipped"]
    assert "ok_value" not in payload["skipped"]


def test_snapshot_skips_locally_defined_functions(worker):
    worker.execute("def fn(v):\n    return v + 1\nz = fn(1)")
    payload = worker.request("snapshot")["payload"]
    assert "fn" in payload["skipped"]
    assert "z" not in payload["skipped"]


def test_empty_namespace_snapshot(worker):
    payload = worker.request("snapshot")["payload"]
    assert payload["skipped"] == []
    assert payload["blob"]


def test_helper_never_appears_in_snapshot(worker):
    worker.execute("q = 1")
    blob = base64.b64decode(worker.request("snapshot")["payload"]["blob"])
    content = pickle.loads(blob)
    assert "canvas_display" not in content["values"]
    assert "__builtins__" not in content["values"]


def test_module_bindings_reimported():
    first = WorkerProc()
    first.execute("import math\nimport json as j")
    snap = first.request("snapshot")["payload"]
    assert snap["skipped"] == []
    first.kill()
    second = WorkerProc()
    assert second.request("restore", {"blob": snap["blob"]})["ok"]
    assert second.execute("math.floor(2.5)")["payload"]["result_repr"] == "2"
    assert second.execute("j.dumps([1])")["payload"]["result_repr"] == "'[1]'"
    second.kill()


def test_restore_corrupt_blob_keeps_namespace(worker):
    worker.execute("keep = 42")
    response = worker.request("restore", {"blob": "!!!not-base64!!!"})
    assert not response["ok"]
    assert worker.execute("keep")["payload"]["result_repr"] == "42"


def test_restore_unknown_module_lands_in_skipped(worker):
    payload = {
        "modules": {"ghost": "definitely_not_installed_module_xyz"},
        "values": {"a": 1},
    }
    blob = base64.b64encode(pickle.dumps(payload)).decode()
    response = worker.request("restore", {"blob": blob})
    assert response["ok"]
    assert response["payload"]["skipped"] == ["ghost"]
    assert worker.execute("a")["payload"]["result_repr"] == "1"


def test_aliasing_survives_snapshot():
    first = WorkerProc()
    first.execute("a = [1]\nb = a")
    snap = first.request("snapshot")["payload"]
    first.kill()
    second = WorkerProc()
    second.request("restore", {"blob": snap["blob"]})
    assert second.execute("a.append(2)\nb")["payload"]["result_repr"] == "[1, 2]"
    second.kill()


# -- behavioral properties --------------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_split_execution_equals_single_shot(seed):
    lines = generate_program(seed, statements=10)
    whole = WorkerProc()
    whole.execute("\n".join(lines))
    expected = whole.probe()
    whole.kill()

    split = WorkerProc()
    for line in lines:
        assert split.execute(line)["ok"], line
    assert split.probe() == expected
    split.kill()


@pytest.mark.parametrize("seed", range(6))
def test_fork_equivalence_smoke(seed):
    p, q = generate_split(seed)
    reference = WorkerProc()
    assert reference.execute(p)["ok"]
    assert reference.execute(q)["ok"]
    expected = reference.probe()
    reference.kill()

    source = WorkerProc()
    assert source.execute(p)["ok"]
    snap = source.request("snapshot")["payload"]
    assert snap["skipped"] == []
    source.kill()

    forked = WorkerProc()
    assert forked.request("restore", {"blob": snap["blob"]})["ok"]
    assert forked.execute(q)["ok"]
    assert forked.probe() == expected
    forked.kill()
