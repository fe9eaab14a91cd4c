from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from codecanvas.documents import DocumentStore
from codecanvas.orchestrator import Orchestrator


@pytest.fixture
def store() -> DocumentStore:
    return DocumentStore()


@pytest.fixture
def orchestrator(store):
    orch = Orchestrator(store)
    yield orch
    orch.shutdown_all()


@pytest.fixture
def live_server(tmp_path):
    """A real uvicorn server on an ephemeral port, plus an httpx client."""
    import httpx

    from codecanvas.server import create_app, make_test_server

    workspace = tmp_path / "workspace"
    workspace.mkdir()
    app = create_app(workspace, autosave_delay=0.05)
    server, base_url = make_test_server(app)
    client = httpx.Client(base_url=base_url, timeout=60.0)
    yield client, app
    client.close()
    server.should_exit = True
    app.state.service.close()
