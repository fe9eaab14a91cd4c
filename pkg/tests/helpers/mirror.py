"""Event-replay mirror: rebuilds a canvas document (as plain dicts) from its
event stream, the same contract the browser client relies on."""

from __future__ import annotations


def new_mirror() -> dict:
    return {"cells": {}, "outputs": {}, "environments": {}, "next_seq": 0}


def apply_event(mirror: dict, kind: str, payload: dict) -> None:
    if kind == "cell-created":
        cell = payload["cell"]
        mirror["cells"][cell["id"]] = cell
        mirror["next_seq"] = payload["next_seq"]
    elif kind == "cell-updated":
        cell = payload["cell"]
        mirror["cells"][cell["id"]] = cell
    elif kind == "cell-moved":
        mirror["cells"][payload["cell_id"]]["frame"] = payload["frame"]
    elif kind == "cell-deleted":
        mirror["cells"].pop(payload["cell_id"], None)
        for output_id in payload.get("removed_output_ids", []):
            mirror["outputs"].pop(output_id, None)
    elif kind == "output-updated":
        output = payload["output"]
        mirror["outputs"][output["id"]] = output
        mirror["next_seq"] = max(mirror["next_seq"], payload["next_seq"])
    elif kind == "output-detached":
        output = payload["output"]
        mirror["outputs"][output["id"]] = output
    elif kind == "output-deleted":
        mirror["outputs"].pop(payload["output_id"], None)
    elif kind == "env-created":
        env = payload["environment"]
        mirror["environments"][env["id"]] = env
        mirror["next_seq"] = payload["next_seq"]
    elif kind == "env-moved":
        env = mirror["environments"][payload["environment_id"]]
        env["region"] = payload["region"]
        for moved in payload["moved_cells"]:
            mirror["cells"][moved["id"]]["frame"] = moved["frame"]
        for moved in payload["moved_outputs"]:
            mirror["outputs"][moved["id"]]["frame"] = moved["frame"]
    elif kind == "env-deleted":
        mirror["environments"].pop(payload["environment_id"], None)
    elif kind == "execution-finished":
        cell = mirror["cells"].get(payload["cell_id"])
        if cell is not None:
            cell["execution_count"] = payload["execution_count"]
    # execution-started and session-warning carry no document state.


def replay(events) -> dict:
    mirror = new_mirror()
    for event in events:
        if hasattr(event, "kind"):
            apply_event(mirror, event.kind, event.payload)
        else:
            apply_event(mirror, event["kind"], event["payload"])
    return mirror


def document_view(canvas_dict: dict) -> dict:
    """The slice of a canvas dict a mirror can reconstruct."""
    return {
        "cells": canvas_dict["cells"],
        "outputs": canvas_dict["outputs"],
        "environments": canvas_dict["environments"],
        "next_seq": canvas_dict["next_seq"],
    }
