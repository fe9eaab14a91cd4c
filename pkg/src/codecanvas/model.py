"""In-memory document model for a 2D code canvas.

A canvas is an unbounded plane holding three kinds of entities: executable
cells, output cells (attached to or detached from their origin cell), and
environment regions that own a forked runtime session. This module is pure
state + geometry; execution lives in the orchestrator and serialization in
the format codecs.

Coordinates are free reals (y grows downward). Routing uses center-point
containment: a cell belongs to the most recently created environment region
that contains its center, else to the main runtime.
"""

from __future__ import annotations

import base64
import binascii
import math
import re
import uuid
from dataclasses import dataclass, field

# Routing sentinel returned by resolve_environment when no region contains
# the cell center. Never a valid environment id (those are "env-<n>").
MAIN = "main"

FORMAT_VERSION = "1.0"

MIME_TYPES = frozenset(
    {"stream/stdout", "stream/stderr", "text/plain", "image/png", "application/json"}
)

# Layout constants shared by output placement, notebook import and the agent.
DEFAULT_CELL_WIDTH = 480.0
DEFAULT_CELL_HEIGHT = 80.0
STACK_GAP = 56.0
OUTPUT_GAP = 16.0
DEFAULT_OUTPUT_HEIGHT = 120.0

_COLOR_RE = re.compile(r"^#[0-9a-fA-F]{6}$|^#[0-9a-fA-F]{3}$")


class ModelError(Exception):
    """Base for document-model failures; carries a stable error code."""

    code = "model-error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class UnknownEntityError(ModelError):
    code = "unknown-entity"


class ValidationError(ModelError):
    code = "invalid-value"


class OutputStateError(ModelError):
    code = "output-state"


def _require_finite(*values: float) -> None:
    for v in values:
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            raise ValidationError(f"coordinate {v!r} is not a finite number")


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        _require_finite(self.x, self.y)

    def shifted(self, dx: float, dy: float) -> "Point":
        return Point(self.x + dx, self.y + dy)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle; origin is the top-left corner."""

    origin: Point
    width: float
    height: float

    def __post_init__(self):
        _require_finite(self.width, self.height)
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"rect dimensions must be positive, got {self.width}x{self.height}"
            )

    @staticmethod
    def of(x: float, y: float, width: float, height: float) -> "Rect":
        return Rect(Point(x, y), width, height)

    @property
    def right(self) -> float:
        return self.origin.x + self.width

    @property
    def bottom(self) -> float:
        return self.origin.y + self.height

    @property
    def center(self) -> Point:
        return Point(self.origin.x + self.width / 2, self.origin.y + self.height / 2)

    def contains(self, p: Point) -> bool:
        # Inclusive on all edges; overlap ties are broken by creation order.
        return (
            self.origin.x <= p.x <= self.right and self.origin.y <= p.y <= self.bottom
        )

    def intersects(self, other: "Rect") -> bool:
        return not (
            self.right <= other.origin.x
            or other.right <= self.origin.x
            or self.bottom <= other.origin.y
            or other.bottom <= self.origin.y
        )

    def shifted(self, dx: float, dy: float) -> "Rect":
        return Rect(self.origin.shifted(dx, dy), self.width, self.height)


@dataclass(frozen=True)
class OutputItem:
    """One typed entry of an output bundle; image/png data is base64 text."""

    mime: str
    data: str

    def __post_init__(self):
        if self.mime not in MIME_TYPES:
            raise ValidationError(f"unsupported mime type {self.mime!r}")
        if not isinstance(self.data, str):
            raise ValidationError("output data must be text")
        if self.mime == "image/png":
            try:
                base64.b64decode(self.data, validate=True)
            except (binascii.Error, ValueError) as exc:
                raise ValidationError(f"image/png data is not valid base64: {exc}")


@dataclass
class Cell:
    id: str
    source: str
    frame: Rect
    created_seq: int
    execution_count: int | None = None
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass
class OutputCell:
    id: str
    origin_cell_id: str
    frame: Rect
    bundle: tuple[OutputItem, ...]
    detached: bool = False
    produced_by: tuple[str, int] = ("", 0)


@dataclass
class Environment:
    id: str
    region: Rect
    color: str
    created_seq: int
    session_id: str


@dataclass
class Canvas:
    id: str
    title: str = "Untitled"
    cells: dict[str, Cell] = field(default_factory=dict)
    outputs: dict[str, OutputCell] = field(default_factory=dict)
    environments: dict[str, Environment] = field(default_factory=dict)
    next_seq: int = 0
    format_version: str = FORMAT_VERSION


def new_canvas(canvas_id: str | None = None, title: str = "Untitled") -> Canvas:
    return Canvas(id=canvas_id or uuid.uuid4().hex, title=title)


def _take_seq(canvas: Canvas) -> int:
    seq = canvas.next_seq
    canvas.next_seq += 1
    return seq


def _get_cell(canvas: Canvas, cell_id: str) -> Cell:
    cell = canvas.cells.get(cell_id)
    if cell is None:
        raise UnknownEntityError(f"no cell {cell_id!r} in canvas {canvas.id}")
    return cell


def _get_output(canvas: Canvas, output_id: str) -> OutputCell:
    out = canvas.outputs.get(output_id)
    if out is None:
        raise UnknownEntityError(f"no output {output_id!r} in canvas {canvas.id}")
    return out


def _get_environment(canvas: Canvas, env_id: str) -> Environment:
    env = canvas.environments.get(env_id)
    if env is None:
        raise UnknownEntityError(f"no environment {env_id!r} in canvas {canvas.id}")
    return env


def create_cell(
    canvas: Canvas,
    source: str,
    frame: Rect,
    metadata: dict[str, str] | None = None,
) -> Cell:
    """Add a cell; it takes the next slot of the canvas-wide creation sequence."""
    seq = _take_seq(canvas)
    cell = Cell(
        id=f"cell-{seq}",
        source=source,
        frame=frame,
        created_seq=seq,
        metadata=dict(metadata or {}),
    )
    canvas.cells[cell.id] = cell
    return cell


def update_cell_source(canvas: Canvas, cell_id: str, source: str) -> Cell:
    cell = _get_cell(canvas, cell_id)
    cell.source = source
    return cell


def move_cell(canvas: Canvas, cell_id: str, new_origin: Point) -> Cell:
    """Reposition a cell. Its output does not follow; outputs move independently."""
    cell = _get_cell(canvas, cell_id)
    cell.frame = Rect(new_origin, cell.frame.width, cell.frame.height)
    return cell


def set_cell_frame(canvas: Canvas, cell_id: str, frame: Rect) -> Cell:
    cell = _get_cell(canvas, cell_id)
    cell.frame = frame
    return cell


def resolve_environment(canvas: Canvas, cell_id: str) -> str:
    """Return the id of the environment owning the cell, or MAIN.

    The owner is the region containing the cell's center point; among
    overlapping regions the most recently created one wins.
    """
    cell = _get_cell(canvas, cell_id)
    center = cell.frame.center
    best: Environment | None = None
    for env in canvas.environments.values():
        if env.region.contains(center):
            if best is None or env.created_seq > best.created_seq:
                best = env
    return best.id if best is not None else MAIN


def create_environment(
    canvas: Canvas, region: Rect, color: str, session_id: str
) -> Environment:
    """Add an environment region. The runtime fork happens at creation time;
    the session id is handed in by the orchestrator and stored opaquely.
    Existing cells inside the region are not re-executed or re-bound."""
    if not _COLOR_RE.match(color):
        raise ValidationError(f"color {color!r} is not a hex color string")
    seq = _take_seq(canvas)
    env = Environment(
        id=f"env-{seq}", region=region, color=color, created_seq=seq, session_id=session_id
    )
    canvas.environments[env.id] = env
    return env


def move_environment(
    canvas: Canvas, env_id: str, delta: tuple[float, float]
) -> tuple[Environment, list[Cell], list[OutputCell]]:
    """Shift a region and everything it contained by (dx, dy).

    Containment is decided from pre-move geometry only: every cell and output
    whose center was inside the region moves rigidly with it. Returns the
    environment and the entities that moved with it.
    """
    env = _get_environment(canvas, env_id)
    dx, dy = delta
    _require_finite(dx, dy)
    region = env.region
    moved_cells = [c for c in canvas.cells.values() if region.contains(c.frame.center)]
    moved_outputs = [o for o in canvas.outputs.values() if region.contains(o.frame.center)]
    env.region = region.shifted(dx, dy)
    for cell in moved_cells:
        cell.frame = cell.frame.shifted(dx, dy)
    for out in moved_outputs:
        out.frame = out.frame.shifted(dx, dy)
    return env, moved_cells, moved_outputs


def attached_output_for(canvas: Canvas, cell_id: str) -> OutputCell | None:
    for out in canvas.outputs.values():
        if out.origin_cell_id == cell_id and not out.detached:
            return out
    return None


def attach_or_update_output(
    canvas: Canvas,
    cell_id: str,
    bundle: tuple[OutputItem, ...] | list[OutputItem],
    produced_by: tuple[str, int],
) -> OutputCell:
    """Record an execution result for a cell.

    If the cell already has an attached output its bundle is replaced in
    place (id and frame survive, even if the user moved it). Otherwise a new
    output appears directly below the cell. Detached outputs are never touched.
    """
    cell = _get_cell(canvas, cell_id)
    bundle = tuple(bundle)
    existing = attached_output_for(canvas, cell_id)
    if existing is not None:
        existing.bundle = bundle
        existing.produced_by = tuple(produced_by)
        return existing
    seq = _take_seq(canvas)
    frame = Rect(
        Point(cell.frame.origin.x, cell.frame.bottom + OUTPUT_GAP),
        cell.frame.width,
        DEFAULT_OUTPUT_HEIGHT,
    )
    out = OutputCell(
        id=f"out-{seq}",
        origin_cell_id=cell_id,
        frame=frame,
        bundle=bundle,
        detached=False,
        produced_by=tuple(produced_by),
    )
    canvas.outputs[out.id] = out
    return out


def move_output(canvas: Canvas, output_id: str, new_origin: Point) -> OutputCell:
    out = _get_output(canvas, output_id)
    out.frame = Rect(new_origin, out.frame.width, out.frame.height)
    return out


def detach_output(canvas: Canvas, output_id: str) -> OutputCell:
    """Freeze an output at its current content and sever it from future
    executions; the origin cell id is kept for provenance."""
    out = _get_output(canvas, output_id)
    if out.detached:
        raise OutputStateError(f"output {output_id!r} is already detached")
    out.detached = True
    return out


def delete_cell(canvas: Canvas, cell_id: str) -> list[str]:
    """Remove a cell and its attached output; detached outputs survive.
    Returns the ids of outputs removed alongside the cell."""
    _get_cell(canvas, cell_id)
    removed = [
        out.id
        for out in canvas.outputs.values()
        if out.origin_cell_id == cell_id and not out.detached
    ]
    for out_id in removed:
        del canvas.outputs[out_id]
    del canvas.cells[cell_id]
    return removed


def delete_output(canvas: Canvas, output_id: str) -> OutputCell:
    out = _get_output(canvas, output_id)
    del canvas.outputs[output_id]
    return out


def delete_environment(canvas: Canvas, env_id: str) -> Environment:
    """Remove the region only; contained cells stay put. Terminating the
    region's session is the orchestrator's job."""
    env = _get_environment(canvas, env_id)
    del canvas.environments[env_id]
    return env


def content_bbox(canvas: Canvas) -> Rect | None:
    """Bounding box of all cells, outputs and environment regions, or None
    for an empty canvas."""
    rects = [c.frame for c in canvas.cells.values()]
    rects += [o.frame for o in canvas.outputs.values()]
    rects += [e.region for e in canvas.environments.values()]
    if not rects:
        return None
    x0 = min(r.origin.x for r in rects)
    y0 = min(r.origin.y for r in rects)
    x1 = max(r.right for r in rects)
    y1 = max(r.bottom for r in rects)
    return Rect(Point(x0, y0), x1 - x0, y1 - y0)


def check_invariants(canvas: Canvas) -> list[str]:
    """Collect every violated document invariant (empty list == healthy)."""
    problems: list[str] = []
    seqs: dict[int, str] = {}
    for cell in canvas.cells.values():
        if cell.created_seq in seqs:
            problems.append(
                f"created_seq {cell.created_seq} used by both {seqs[cell.created_seq]} and {cell.id}"
            )
        seqs[cell.created_seq] = cell.id
        if cell.execution_count is not None and cell.execution_count < 1:
            problems.append(f"cell {cell.id}: execution_count must be positive")
    for env in canvas.environments.values():
        if env.created_seq in seqs:
            problems.append(
                f"created_seq {env.created_seq} used by both {seqs[env.created_seq]} and {env.id}"
            )
        seqs[env.created_seq] = env.id
        if not _COLOR_RE.match(env.color):
            problems.append(f"environment {env.id}: bad color {env.color!r}")
    if seqs and canvas.next_seq <= max(seqs):
        problems.append(
            f"next_seq {canvas.next_seq} not greater than max created_seq {max(seqs)}"
        )
    attached_seen: dict[str, str] = {}
    for out in canvas.outputs.values():
        if not out.detached:
            if out.origin_cell_id in attached_seen:
                problems.append(
                    f"cell {out.origin_cell_id} has two attached outputs: "
                    f"{attached_seen[out.origin_cell_id]} and {out.id}"
                )
            attached_seen[out.origin_cell_id] = out.id
            if out.origin_cell_id not in canvas.cells:
                problems.append(
                    f"attached output {out.id} references missing cell {out.origin_cell_id}"
                )
    for key, holder in (("cell", canvas.cells), ("output", canvas.outputs), ("environment", canvas.environments)):
        for entity_id, entity in holder.items():
            if entity.id != entity_id:
                problems.append(f"{key} stored under {entity_id!r} but has id {entity.id!r}")
    return problems
