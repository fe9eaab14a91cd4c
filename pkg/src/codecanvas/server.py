"""HTTP service exposing canvases to UIs and agents.

REST for all mutations, one server-sent-event stream per canvas for live
updates, ``.2dntb`` files in a workspace directory for persistence. Binds to
loopback unless told otherwise; there is no authentication.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import socket
import threading
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import agent as agent_mod
from . import formats, model
from .documents import DocumentStore
from .orchestrator import Orchestrator, SessionError
from .service import AUTOSAVE_DELAY, CanvasService, Workspace

logger = logging.getLogger(__name__)

EXECUTE_TIMEOUT = 120.0
SSE_KEEPALIVE = 15.0


class RectBody(BaseModel):
    x: float
    y: float
    width: float
    height: float


class PointBody(BaseModel):
    x: float
    y: float


class CanvasCreateBody(BaseModel):
    title: str = "Untitled"
    id: str | None = None


class CellCreateBody(BaseModel):
    source: str
    frame: RectBody


class CellPatchBody(BaseModel):
    source: str | None = None
    frame: RectBody | None = None


class EnvCreateBody(BaseModel):
    region: RectBody
    color: str = Field(pattern=r"^#[0-9a-fA-F]{3}$|^#[0-9a-fA-F]{6}$")


class MoveDeltaBody(BaseModel):
    dx: float = 0.0
    dy: float = 0.0


class OutputMoveBody(BaseModel):
    origin: PointBody


class AgentTaskBody(BaseModel):
    name: str
    steps: list[str] = Field(min_length=1)
    stop_on_error: bool = True


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(
    workspace_root: Path | str | None = None,
    *,
    worker_command: list[str] | None = None,
    autosave_delay: float = AUTOSAVE_DELAY,
    execute_timeout: float = EXECUTE_TIMEOUT,
) -> FastAPI:
    store = DocumentStore()
    orchestrator = Orchestrator(store, worker_command=worker_command)
    workspace = Workspace(workspace_root) if workspace_root is not None else None
    service = CanvasService(
        store, orchestrator, workspace=workspace, autosave_delay=autosave_delay
    )

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        service.close()

    app = FastAPI(title="codecanvas", version="0.1.0", lifespan=lifespan)
    # The browser UI may be served from any static-file origin; the service
    # itself binds to loopback by default and carries no credentials.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.service = service
    app.state.store = store
    app.state.orchestrator = orchestrator

    busy_cells: set[tuple[str, str]] = set()
    busy_agents: set[str] = set()
    busy_lock = threading.Lock()

    @app.exception_handler(model.UnknownEntityError)
    def _unknown(request: Request, exc: model.UnknownEntityError):
        return _error(404, exc.code, str(exc))

    @app.exception_handler(model.ModelError)
    def _model_error(request: Request, exc: model.ModelError):
        return _error(422, exc.code, str(exc))

    @app.exception_handler(formats.CodecError)
    def _codec_error(request: Request, exc: formats.CodecError):
        return _error(422, exc.code, str(exc))

    @app.exception_handler(SessionError)
    def _session_error(request: Request, exc: SessionError):
        return _error(500, exc.code, str(exc))

    # -- canvases ------------------------------------------------------------

    @app.get("/canvases")
    def list_canvases() -> list[dict]:
        warnings = service.scan_workspace()
        for warning in warnings:
            logger.warning("workspace scan: %s", warning)
        return service.summaries()

    @app.post("/canvases")
    def create_canvas(body: CanvasCreateBody) -> dict:
        canvas = service.create_canvas(title=body.title, canvas_id=body.id)
        return formats.canvas_to_dict(canvas)

    @app.get("/canvases/{canvas_id}")
    def get_canvas(canvas_id: str) -> dict:
        return service.canvas_state(canvas_id)

    @app.delete("/canvases/{canvas_id}")
    def delete_canvas(canvas_id: str) -> dict:
        service.delete_canvas(canvas_id)
        return {"deleted": canvas_id}

    # -- cells ---------------------------------------------------------------

    @app.post("/canvases/{canvas_id}/cells")
    def create_cell(canvas_id: str, body: CellCreateBody) -> dict:
        cell = service.create_cell(canvas_id, body.source, body.frame.model_dump())
        return formats.cell_to_dict(cell)

    @app.patch("/canvases/{canvas_id}/cells/{cell_id}")
    def patch_cell(canvas_id: str, cell_id: str, body: CellPatchBody) -> dict:
        cell = service.update_cell(
            canvas_id,
            cell_id,
            source=body.source,
            frame=body.frame.model_dump() if body.frame else None,
        )
        return formats.cell_to_dict(cell)

    @app.delete("/canvases/{canvas_id}/cells/{cell_id}")
    def delete_cell(canvas_id: str, cell_id: str) -> dict:
        removed = service.delete_cell(canvas_id, cell_id)
        return {"deleted": cell_id, "removed_output_ids": removed}

    @app.post("/canvases/{canvas_id}/cells/{cell_id}/execute")
    def execute_cell(canvas_id: str, cell_id: str):
        key = (canvas_id, cell_id)
        with busy_lock:
            if key in busy_cells:
                return _error(409, "execution-conflict", f"cell {cell_id} already has a queued job")
            busy_cells.add(key)
        try:
            result = service.execute_cell(canvas_id, cell_id, timeout=execute_timeout)
        except concurrent.futures.TimeoutError:
            # The session stays busy until the cell actually finishes.
            return _error(504, "execution-timeout", f"cell {cell_id} still running after {execute_timeout}s")
        finally:
            with busy_lock:
                busy_cells.discard(key)
        return result.to_dict()

    # -- environments ----------------------------------------------------------

    @app.post("/canvases/{canvas_id}/environments")
    def create_environment(canvas_id: str, body: EnvCreateBody) -> dict:
        env, warnings = service.create_environment(
            canvas_id, body.region.model_dump(), body.color
        )
        return {"environment": formats.environment_to_dict(env), "warnings": warnings}

    @app.patch("/canvases/{canvas_id}/environments/{env_id}")
    def move_environment(canvas_id: str, env_id: str, body: MoveDeltaBody) -> dict:
        env = service.move_environment(canvas_id, env_id, body.dx, body.dy)
        return formats.environment_to_dict(env)

    @app.delete("/canvases/{canvas_id}/environments/{env_id}")
    def delete_environment(canvas_id: str, env_id: str) -> dict:
        service.delete_environment(canvas_id, env_id)
        return {"deleted": env_id}

    # -- outputs ------------------------------------------------------------------

    @app.post("/canvases/{canvas_id}/outputs/{output_id}/detach")
    def detach_output(canvas_id: str, output_id: str) -> dict:
        out = service.detach_output(canvas_id, output_id)
        return formats.output_to_dict(out)

    @app.patch("/canvases/{canvas_id}/outputs/{output_id}")
    def move_output(canvas_id: str, output_id: str, body: OutputMoveBody) -> dict:
        out = service.move_output(canvas_id, output_id, body.origin.model_dump())
        return formats.output_to_dict(out)

    @app.delete("/canvases/{canvas_id}/outputs/{output_id}")
    def delete_output(canvas_id: str, output_id: str) -> dict:
        service.delete_output(canvas_id, output_id)
        return {"deleted": output_id}

    # -- files ------------------------------------------------------------------------

    @app.get("/canvases/{canvas_id}/file")
    def get_file(canvas_id: str) -> Response:
        return Response(content=service.file_bytes(canvas_id), media_type="application/json")

    @app.put("/canvases/{canvas_id}/file")
    async def put_file(canvas_id: str, request: Request) -> dict:
        data = await request.body()
        canvas = service.replace_from_bytes(canvas_id, data)
        return formats.canvas_to_dict(canvas)

    @app.get("/canvases/{canvas_id}/export/ipynb")
    def export_ipynb(canvas_id: str) -> dict:
        document, warnings = service.export_ipynb(canvas_id)
        return {"document": document, "warnings": warnings}

    @app.post("/canvases/import/ipynb")
    async def import_ipynb(request: Request) -> dict:
        try:
            document = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            return _error(422, "malformed-json", f"invalid JSON body: {exc}")
        canvas = service.import_ipynb(document)
        return formats.canvas_to_dict(canvas)

    # -- events -----------------------------------------------------------------------

    @app.get("/canvases/{canvas_id}/events")
    def events(canvas_id: str, from_seq: int | None = None) -> StreamingResponse:
        subscription = store.subscribe(canvas_id, from_seq=from_seq)

        def stream():
            try:
                while True:
                    event = subscription.get(timeout=SSE_KEEPALIVE)
                    if subscription.closed and event is None:
                        break
                    if event is None:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(event.to_dict(), separators=(',', ':'))}\n\n"
            finally:
                store.unsubscribe(canvas_id, subscription)

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    # -- agent ------------------------------------------------------------------------

    @app.post("/canvases/{canvas_id}/agent/tasks")
    def run_agent_task(canvas_id: str, body: AgentTaskBody):
        if not store.contains(canvas_id):
            return _error(404, "unknown-entity", f"no canvas {canvas_id!r}")
        with busy_lock:
            if canvas_id in busy_agents:
                return _error(409, "agent-conflict", f"an agent task is already running on {canvas_id}")
            busy_agents.add(canvas_id)
        try:
            task = agent_mod.AgentTask(
                name=body.name, steps=list(body.steps), stop_on_error=body.stop_on_error
            )
            report = agent_mod.run_task(
                agent_mod.LocalCanvasApi(service), canvas_id, task
            )
        finally:
            with busy_lock:
                busy_agents.discard(canvas_id)
        return report.to_dict()

    return app


def check_port_free(host: str, port: int) -> None:
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    finally:
        probe.close()


def serve(
    port: int,
    workspace_root: Path | str,
    bind: str = "127.0.0.1",
    *,
    worker_command: list[str] | None = None,
    log_level: str = "info",
) -> None:
    """Run the service until interrupted; raises OSError if the port is taken."""
    import uvicorn

    check_port_free(bind, port)
    app = create_app(workspace_root, worker_command=worker_command)
    logger.info("listening on http://%s:%d (workspace %s)", bind, port, workspace_root)
    uvicorn.run(app, host=bind, port=port, log_level=log_level)


def make_test_server(app: FastAPI, host: str = "127.0.0.1") -> tuple[Any, str]:
    """Start the app on an ephemeral port in a daemon thread.

    Returns (uvicorn server, base url); used by the test-suite and demo
    scripts to drive a real HTTP endpoint.
    """
    import time

    import uvicorn

    config = uvicorn.Config(app, host=host, port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("test server did not start in time")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    return server, f"http://{host}:{port}"
