"""File-format codecs for canvases.

Two formats are spoken here:

* ``.2dntb`` — the native format: canonical JSON (sorted keys, two-space
  indent, LF, UTF-8), so equal canvases always serialize to identical bytes.
* ``.ipynb`` — Jupyter nbformat 4.5. Cells are emitted in creation order;
  canvas geometry and output records ride along under the ``canvas``
  metadata key so a canvas survives the trip losslessly, while a plain
  notebook imports into a deterministic vertical layout.
"""

from __future__ import annotations

import json
import re
from importlib import resources
from typing import Any

from . import model
from .model import (
    Canvas,
    Cell,
    Environment,
    OutputCell,
    OutputItem,
    Point,
    Rect,
)

TWODNTB_VERSION = "1.0"
NBFORMAT_MAJOR = 4
NBFORMAT_MINOR = 5

_ID_SEQ_RE = re.compile(r"^(?:cell|env|out)-(\d+)$")


class CodecError(Exception):
    """Base for file-format failures; carries a stable error code."""

    code = "codec-error"

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class MalformedDocumentError(CodecError):
    code = "malformed-document"


class UnsupportedVersionError(CodecError):
    code = "unsupported-version"


class DocumentInvariantError(CodecError):
    code = "invariant-violation"

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


# ---------------------------------------------------------------------------
# Entity <-> plain-dict codecs (also used by the REST layer and event stream)
# ---------------------------------------------------------------------------


def rect_to_dict(rect: Rect) -> dict:
    return {
        "x": rect.origin.x,
        "y": rect.origin.y,
        "width": rect.width,
        "height": rect.height,
    }


def rect_from_dict(d: dict) -> Rect:
    return Rect(Point(d["x"], d["y"]), d["width"], d["height"])


def cell_to_dict(cell: Cell) -> dict:
    return {
        "id": cell.id,
        "source": cell.source,
        "frame": rect_to_dict(cell.frame),
        "created_seq": cell.created_seq,
        "execution_count": cell.execution_count,
        "metadata": dict(cell.metadata),
    }


def cell_from_dict(d: dict) -> Cell:
    metadata = d.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise MalformedDocumentError(f"cell {d.get('id')!r}: metadata must map strings to strings")
    return Cell(
        id=d["id"],
        source=d["source"],
        frame=rect_from_dict(d["frame"]),
        created_seq=d["created_seq"],
        execution_count=d.get("execution_count"),
        metadata=dict(metadata),
    )


def output_to_dict(out: OutputCell) -> dict:
    return {
        "id": out.id,
        "origin_cell_id": out.origin_cell_id,
        "frame": rect_to_dict(out.frame),
        "bundle": [{"mime": item.mime, "data": item.data} for item in out.bundle],
        "detached": out.detached,
        "produced_by": {
            "session_id": out.produced_by[0],
            "execution_count": out.produced_by[1],
        },
    }


def output_from_dict(d: dict) -> OutputCell:
    produced = d["produced_by"]
    return OutputCell(
        id=d["id"],
        origin_cell_id=d["origin_cell_id"],
        frame=rect_from_dict(d["frame"]),
        bundle=tuple(OutputItem(item["mime"], item["data"]) for item in d["bundle"]),
        detached=bool(d["detached"]),
        produced_by=(produced["session_id"], produced["execution_count"]),
    )


def environment_to_dict(env: Environment) -> dict:
    return {
        "id": env.id,
        "region": rect_to_dict(env.region),
        "color": env.color,
        "created_seq": env.created_seq,
        "session_id": env.session_id,
    }


def environment_from_dict(d: dict) -> Environment:
    return Environment(
        id=d["id"],
        region=rect_from_dict(d["region"]),
        color=d["color"],
        created_seq=d["created_seq"],
        session_id=d["session_id"],
    )


def canvas_to_dict(canvas: Canvas) -> dict:
    return {
        "id": canvas.id,
        "title": canvas.title,
        "cells": {cid: cell_to_dict(c) for cid, c in canvas.cells.items()},
        "outputs": {oid: output_to_dict(o) for oid, o in canvas.outputs.items()},
        "environments": {
            eid: environment_to_dict(e) for eid, e in canvas.environments.items()
        },
        "next_seq": canvas.next_seq,
        "format_version": canvas.format_version,
    }


def canvas_from_dict(d: dict) -> Canvas:
    try:
        canvas = Canvas(
            id=d["id"],
            title=d["title"],
            cells={cid: cell_from_dict(c) for cid, c in d["cells"].items()},
            outputs={oid: output_from_dict(o) for oid, o in d["outputs"].items()},
            environments={
                eid: environment_from_dict(e) for eid, e in d["environments"].items()
            },
            next_seq=d["next_seq"],
            format_version=d["format_version"],
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise MalformedDocumentError(f"canvas object is malformed: {exc!r}")
    except model.ValidationError as exc:
        raise MalformedDocumentError(str(exc))
    return canvas


# ---------------------------------------------------------------------------
# .2dntb
# ---------------------------------------------------------------------------


def canonical_json_bytes(payload: Any) -> bytes:
    return (
        json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    ).encode("utf-8")


def serialize_2dntb(canvas: Canvas) -> bytes:
    """Canonical bytes for a canvas; deterministic for equal canvases."""
    return canonical_json_bytes(
        {"version": TWODNTB_VERSION, "canvas": canvas_to_dict(canvas)}
    )


def parse_2dntb(data: bytes | str) -> Canvas:
    """Parse and validate ``.2dntb`` bytes.

    Empty (or whitespace-only) input is legal and yields a fresh empty
    canvas, so a newly touched file becomes usable on first execution.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocumentError(f"not UTF-8: {exc}", code="malformed-json")
    else:
        text = data
    if not text.strip():
        return model.new_canvas()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocumentError(f"invalid JSON: {exc}", code="malformed-json")
    if not isinstance(payload, dict):
        raise MalformedDocumentError("top-level value must be an object")
    version = payload.get("version")
    if version != TWODNTB_VERSION:
        raise UnsupportedVersionError(f"unsupported document version {version!r}")
    if not isinstance(payload.get("canvas"), dict):
        raise MalformedDocumentError("missing canvas object")
    canvas = canvas_from_dict(payload["canvas"])
    violations = model.check_invariants(canvas)
    if violations:
        raise DocumentInvariantError(violations)
    return canvas


# ---------------------------------------------------------------------------
# .ipynb
# ---------------------------------------------------------------------------


def _join_source(source: Any) -> str:
    if isinstance(source, list):
        return "".join(source)
    return str(source)


def _json_mime_to_text(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True)


def _json_mime_from_text(data: str) -> Any:
    try:
        return json.loads(data)
    except json.JSONDecodeError:
        return data


def _attached_items_to_nb_outputs(
    bundle: tuple[OutputItem, ...], execution_count: int | None
) -> list[dict]:
    outputs: list[dict] = []
    for item in bundle:
        if item.mime == "stream/stdout":
            outputs.append({"output_type": "stream", "name": "stdout", "text": item.data})
        elif item.mime == "stream/stderr":
            outputs.append({"output_type": "stream", "name": "stderr", "text": item.data})
        elif item.mime == "text/plain":
            outputs.append(
                {
                    "output_type": "execute_result",
                    "execution_count": execution_count,
                    "data": {"text/plain": item.data},
                    "metadata": {},
                }
            )
        elif item.mime == "image/png":
            outputs.append(
                {"output_type": "display_data", "data": {"image/png": item.data}, "metadata": {}}
            )
        else:  # application/json
            outputs.append(
                {
                    "output_type": "display_data",
                    "data": {"application/json": _json_mime_from_text(item.data)},
                    "metadata": {},
                }
            )
    return outputs


def _detached_items_to_nb_outputs(bundle: tuple[OutputItem, ...]) -> list[dict]:
    # Frozen bundles become plain display_data so vanilla Jupyter still shows
    # them; the faithful record lives in the cell's canvas metadata.
    outputs: list[dict] = []
    for item in bundle:
        if item.mime == "image/png":
            data = {"image/png": item.data}
        elif item.mime == "application/json":
            data = {"application/json": _json_mime_from_text(item.data)}
        else:
            data = {"text/plain": item.data}
        outputs.append({"output_type": "display_data", "data": data, "metadata": {}})
    return outputs


def _nb_outputs_to_items(outputs: list[dict]) -> list[OutputItem]:
    items: list[OutputItem] = []
    for out in outputs:
        kind = out.get("output_type")
        if kind == "stream":
            mime = "stream/stdout" if out.get("name") == "stdout" else "stream/stderr"
            items.append(OutputItem(mime, _join_source(out.get("text", ""))))
        elif kind in ("execute_result", "display_data"):
            data = out.get("data", {})
            if "text/plain" in data:
                items.append(OutputItem("text/plain", _join_source(data["text/plain"])))
            if "image/png" in data:
                items.append(OutputItem("image/png", _join_source(data["image/png"]).strip()))
            if "application/json" in data:
                items.append(
                    OutputItem("application/json", _json_mime_to_text(data["application/json"]))
                )
        elif kind == "error":
            text = "{}: {}\n".format(out.get("ename", "Error"), out.get("evalue", ""))
            tb = out.get("traceback") or []
            if tb:
                text += "\n".join(tb)
            items.append(OutputItem("stream/stderr", text))
    return items


def export_ipynb(canvas: Canvas) -> tuple[dict, list[str]]:
    """Render a canvas as an nbformat-4.5 document.

    Cells appear in creation order. Attached outputs map to native Jupyter
    output types; detached outputs are appended after them as display_data.
    Detached outputs whose origin cell no longer exists cannot be placed and
    are dropped; each drop is reported in the returned warnings.
    """
    warnings: list[str] = []
    detached_by_cell: dict[str, list[OutputCell]] = {}
    for out in canvas.outputs.values():
        if not out.detached:
            continue
        if out.origin_cell_id not in canvas.cells:
            warnings.append(
                f"dropped detached output {out.id}: origin cell {out.origin_cell_id} no longer exists"
            )
            continue
        detached_by_cell.setdefault(out.origin_cell_id, []).append(out)

    nb_cells: list[dict] = []
    for cell in sorted(canvas.cells.values(), key=lambda c: c.created_seq):
        attached = model.attached_output_for(canvas, cell.id)
        detached = detached_by_cell.get(cell.id, [])
        canvas_meta = {
            "frame": rect_to_dict(cell.frame),
            "created_seq": cell.created_seq,
            "metadata": dict(cell.metadata),
            "attached_output": output_to_dict(attached) if attached else None,
            "detached_outputs": [output_to_dict(o) for o in detached],
        }
        non_code = cell.metadata.get("non-code")
        if non_code is not None:
            nb_cells.append(
                {
                    "id": cell.id,
                    "cell_type": "raw" if non_code == "raw" else "markdown",
                    "metadata": {"canvas": canvas_meta},
                    "source": cell.source,
                }
            )
            continue
        nb_outputs = _attached_items_to_nb_outputs(
            attached.bundle if attached else (), cell.execution_count
        )
        for out in detached:
            nb_outputs.extend(_detached_items_to_nb_outputs(out.bundle))
        nb_cells.append(
            {
                "id": cell.id,
                "cell_type": "code",
                "metadata": {"canvas": canvas_meta},
                "source": cell.source,
                "execution_count": cell.execution_count,
                "outputs": nb_outputs,
            }
        )

    document = {
        "nbformat": NBFORMAT_MAJOR,
        "nbformat_minor": NBFORMAT_MINOR,
        "metadata": {
            "language_info": {"name": "python"},
            "canvas": {
                "id": canvas.id,
                "title": canvas.title,
                "next_seq": canvas.next_seq,
                "format_version": canvas.format_version,
                "environments": [
                    environment_to_dict(e) for e in canvas.environments.values()
                ],
            },
        },
        "cells": nb_cells,
    }
    return document, warnings


def _seq_floor(canvas: Canvas) -> int:
    """Smallest next_seq that cannot collide with any existing id or seq."""
    floor = 0
    for cell in canvas.cells.values():
        floor = max(floor, cell.created_seq + 1)
    for env in canvas.environments.values():
        floor = max(floor, env.created_seq + 1)
    for entity_id in (*canvas.cells, *canvas.outputs, *canvas.environments):
        m = _ID_SEQ_RE.match(entity_id)
        if m:
            floor = max(floor, int(m.group(1)) + 1)
    return floor


def import_ipynb(document: dict) -> Canvas:
    """Build a canvas from an nbformat-4 document.

    With ``canvas`` metadata present, geometry and output records are
    restored exactly. A plain notebook gets the default vertical layout:
    cell i at (0, i * 136), width 480, outputs attached below. Markdown and
    raw cells import as non-executable cells tagged ``non-code``.
    """
    if not isinstance(document, dict):
        raise MalformedDocumentError("notebook must be a JSON object")
    nbformat = document.get("nbformat")
    if nbformat != NBFORMAT_MAJOR:
        raise UnsupportedVersionError(f"unsupported nbformat {nbformat!r}, need 4")
    nb_cells = document.get("cells")
    if not isinstance(nb_cells, list):
        raise MalformedDocumentError("notebook has no cells array")

    nb_meta = document.get("metadata") or {}
    canvas_meta = nb_meta.get("canvas") if isinstance(nb_meta, dict) else None

    if isinstance(canvas_meta, dict):
        canvas = _import_with_canvas_metadata(canvas_meta, nb_cells)
    else:
        canvas = _import_plain(nb_cells)
    violations = model.check_invariants(canvas)
    if violations:
        raise DocumentInvariantError(violations)
    return canvas


def _import_with_canvas_metadata(canvas_meta: dict, nb_cells: list) -> Canvas:
    try:
        canvas = Canvas(
            id=canvas_meta["id"],
            title=canvas_meta.get("title", "Untitled"),
            next_seq=0,
            format_version=canvas_meta.get("format_version", TWODNTB_VERSION),
        )
        for env_dict in canvas_meta.get("environments", []):
            env = environment_from_dict(env_dict)
            canvas.environments[env.id] = env
    except (KeyError, TypeError) as exc:
        raise MalformedDocumentError(f"canvas metadata is malformed: {exc!r}")

    fallback_slot = 0
    for nb_cell in nb_cells:
        cell_type = nb_cell.get("cell_type")
        meta = (nb_cell.get("metadata") or {}).get("canvas")
        source = _join_source(nb_cell.get("source", ""))
        if isinstance(meta, dict):
            try:
                cell = Cell(
                    id=nb_cell["id"],
                    source=source,
                    frame=rect_from_dict(meta["frame"]),
                    created_seq=meta["created_seq"],
                    execution_count=nb_cell.get("execution_count")
                    if cell_type == "code"
                    else None,
                    metadata=dict(meta.get("metadata", {})),
                )
            except (KeyError, TypeError) as exc:
                raise MalformedDocumentError(f"cell canvas metadata is malformed: {exc!r}")
            canvas.cells[cell.id] = cell
            for record in [meta.get("attached_output"), *meta.get("detached_outputs", [])]:
                if record is None:
                    continue
                out = output_from_dict(record)
                canvas.outputs[out.id] = out
        else:
            # Foreign cell added to an exported notebook: give it a fresh slot.
            canvas.next_seq = max(canvas.next_seq, _seq_floor(canvas))
            cell = model.create_cell(
                canvas,
                source,
                _plain_frame(fallback_slot),
                metadata={} if cell_type == "code" else {"non-code": str(cell_type)},
            )
            if cell_type == "code":
                cell.execution_count = nb_cell.get("execution_count")
        fallback_slot += 1

    canvas.next_seq = max(canvas_meta.get("next_seq", 0), _seq_floor(canvas))
    return canvas


def _plain_frame(slot: int) -> Rect:
    y = slot * (model.DEFAULT_CELL_HEIGHT + model.STACK_GAP)
    return Rect(Point(0.0, y), model.DEFAULT_CELL_WIDTH, model.DEFAULT_CELL_HEIGHT)


def _import_plain(nb_cells: list) -> Canvas:
    canvas = model.new_canvas()
    imported: list[tuple[Cell, list[dict]]] = []
    for slot, nb_cell in enumerate(nb_cells):
        cell_type = nb_cell.get("cell_type")
        source = _join_source(nb_cell.get("source", ""))
        metadata = {} if cell_type == "code" else {"non-code": str(cell_type)}
        cell = model.create_cell(canvas, source, _plain_frame(slot), metadata=metadata)
        if cell_type == "code":
            count = nb_cell.get("execution_count")
            cell.execution_count = count if isinstance(count, int) and count > 0 else None
            imported.append((cell, nb_cell.get("outputs") or []))
    for cell, nb_outputs in imported:
        items = _nb_outputs_to_items(nb_outputs)
        if items:
            model.attach_or_update_output(
                canvas, cell.id, tuple(items), ("imported", cell.execution_count or 0)
            )
    return canvas


# ---------------------------------------------------------------------------
# nbformat schema validation (vendored schema)
# ---------------------------------------------------------------------------


def nbformat_schema() -> dict:
    text = (
        resources.files("codecanvas").joinpath("data/nbformat.v4.schema.json").read_text("utf-8")
    )
    return json.loads(text)


def validate_ipynb(document: dict) -> list[str]:
    """Validate a notebook against the vendored nbformat-4 schema; returns
    human-readable violation strings (empty == valid)."""
    import jsonschema

    validator = jsonschema.Draft4Validator(nbformat_schema())
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    return [
        "{}: {}".format("/".join(str(p) for p in err.absolute_path) or "<root>", err.message)
        for err in errors
    ]
