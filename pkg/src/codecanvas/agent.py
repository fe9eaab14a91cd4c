"""Deterministic scripted agent.

Given a task (a named list of code steps), the agent claims an empty patch
of canvas to the right of all existing content, creates a dedicated
environment there (forked from the main runtime), then places and executes
one cell per step inside it, reporting the results. It only ever talks to
the canvas through the same operations the public REST API exposes, so an
external agent can drive the identical flow over HTTP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

from . import formats, model
from .model import Canvas, Rect

AGENT_ENV_COLOR = "#BF80FF"
PLACEMENT_MARGIN = 64.0
REGION_PADDING = 32.0
CELL_WIDTH = model.DEFAULT_CELL_WIDTH
CELL_HEIGHT = model.DEFAULT_CELL_HEIGHT
CELL_GAP = model.STACK_GAP


@dataclass
class AgentTask:
    name: str
    steps: list[str]
    stop_on_error: bool = True

    def __post_init__(self):
        if not self.steps:
            raise model.ValidationError("agent task needs at least one step")


@dataclass
class AgentReport:
    env_id: str
    cell_ids: list[str] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    status: str = "completed"
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "env_id": self.env_id,
            "cell_ids": list(self.cell_ids),
            "steps": list(self.steps),
            "status": self.status,
            "warnings": list(self.warnings),
        }


class CanvasApi(Protocol):
    """The slice of the public API surface the agent needs."""

    def canvas_snapshot(self, canvas_id: str) -> dict: ...

    def create_environment(self, canvas_id: str, region: dict, color: str) -> dict: ...

    def create_cell(self, canvas_id: str, source: str, frame: dict) -> dict: ...

    def execute_cell(self, canvas_id: str, cell_id: str) -> dict: ...


class LocalCanvasApi:
    """In-process implementation used by the service's agent endpoint."""

    def __init__(self, service):
        self._service = service

    def canvas_snapshot(self, canvas_id: str) -> dict:
        return self._service.canvas_dict(canvas_id)

    def create_environment(self, canvas_id: str, region: dict, color: str) -> dict:
        env, warnings = self._service.create_environment(canvas_id, region, color)
        return {"environment": formats.environment_to_dict(env), "warnings": warnings}

    def create_cell(self, canvas_id: str, source: str, frame: dict) -> dict:
        cell = self._service.create_cell(canvas_id, source, frame)
        return formats.cell_to_dict(cell)

    def execute_cell(self, canvas_id: str, cell_id: str) -> dict:
        return self._service.execute_cell(canvas_id, cell_id).to_dict()


class HttpCanvasApi:
    """REST implementation for driving a live server."""

    def __init__(self, base_url: str, client=None, timeout: float = 180.0):
        import httpx

        self._client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def _checked(self, response):
        if response.status_code >= 400:
            raise RuntimeError(f"{response.request.url}: {response.status_code} {response.text}")
        return response.json()

    def canvas_snapshot(self, canvas_id: str) -> dict:
        return self._checked(self._client.get(f"/canvases/{canvas_id}"))

    def create_environment(self, canvas_id: str, region: dict, color: str) -> dict:
        return self._checked(
            self._client.post(
                f"/canvases/{canvas_id}/environments", json={"region": region, "color": color}
            )
        )

    def create_cell(self, canvas_id: str, source: str, frame: dict) -> dict:
        return self._checked(
            self._client.post(
                f"/canvases/{canvas_id}/cells", json={"source": source, "frame": frame}
            )
        )

    def execute_cell(self, canvas_id: str, cell_id: str) -> dict:
        return self._checked(self._client.post(f"/canvases/{canvas_id}/cells/{cell_id}/execute"))


def _bbox_of_rect_dicts(rects: list[dict]) -> Rect | None:
    if not rects:
        return None
    x0 = min(r["x"] for r in rects)
    y0 = min(r["y"] for r in rects)
    x1 = max(r["x"] + r["width"] for r in rects)
    y1 = max(r["y"] + r["height"] for r in rects)
    return Rect.of(x0, y0, x1 - x0, y1 - y0)


def _snapshot_rects(snapshot: dict) -> list[dict]:
    rects = [c["frame"] for c in snapshot.get("cells", {}).values()]
    rects += [o["frame"] for o in snapshot.get("outputs", {}).values()]
    rects += [e["region"] for e in snapshot.get("environments", {}).values()]
    return rects


def free_region(canvas: Canvas, needed_width: float, needed_height: float) -> Rect:
    """A rect intersecting nothing on the canvas: to the right of the global
    bounding box with a margin, at the bounding box's top. An empty canvas
    yields a rect at the origin."""
    if needed_width <= 0 or needed_height <= 0:
        raise model.ValidationError("free_region needs positive dimensions")
    bbox = model.content_bbox(canvas)
    if bbox is None:
        return Rect.of(0.0, 0.0, needed_width, needed_height)
    return Rect.of(bbox.right + PLACEMENT_MARGIN, bbox.origin.y, needed_width, needed_height)


def plan_layout(snapshot: dict, step_count: int) -> tuple[dict, list[dict]]:
    """Region and per-step cell frames for a task, as JSON rect objects.

    Steps stack vertically inside the padded region. On an empty canvas the
    bounding box degenerates to the origin, so the region still lands one
    margin to the right of (0, 0).
    """
    region_width = CELL_WIDTH + 2 * REGION_PADDING
    region_height = step_count * CELL_HEIGHT + (step_count - 1) * CELL_GAP + 2 * REGION_PADDING
    bbox = _bbox_of_rect_dicts(_snapshot_rects(snapshot))
    if bbox is None:
        origin_x, origin_y = PLACEMENT_MARGIN, 0.0
    else:
        origin_x, origin_y = bbox.right + PLACEMENT_MARGIN, bbox.origin.y
    region = {"x": origin_x, "y": origin_y, "width": region_width, "height": region_height}
    frames = [
        {
            "x": origin_x + REGION_PADDING,
            "y": origin_y + REGION_PADDING + i * (CELL_HEIGHT + CELL_GAP),
            "width": CELL_WIDTH,
            "height": CELL_HEIGHT,
        }
        for i in range(step_count)
    ]
    return region, frames


def run_task(api: CanvasApi, canvas_id: str, task: AgentTask) -> AgentReport:
    """Execute a task in a dedicated environment and report per-step results.

    Never mutates anything outside the region it claims; stops at the first
    failing step when the task says so.
    """
    snapshot = api.canvas_snapshot(canvas_id)
    region, frames = plan_layout(snapshot, len(task.steps))
    created = api.create_environment(canvas_id, region, AGENT_ENV_COLOR)
    report = AgentReport(
        env_id=created["environment"]["id"],
        warnings=list(created.get("warnings", [])),
    )
    for index, (code, frame) in enumerate(zip(task.steps, frames)):
        cell = api.create_cell(canvas_id, code, frame)
        report.cell_ids.append(cell["id"])
        result = api.execute_cell(canvas_id, cell["id"])
        report.steps.append({"index": index, "cell_id": cell["id"], "result": result})
        if result["status"] == "error" and task.stop_on_error:
            report.status = f"failed-at-step-{index + 1}"
            break
    return report
