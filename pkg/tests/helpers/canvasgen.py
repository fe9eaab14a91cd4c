"""Seeded random canvas builder.

Canvases are grown only through model operations, so every generated canvas
satisfies the document invariants by construction. Used by the round-trip,
routing and export-order property suites.
"""

from __future__ import annotations

import base64
import random

from codecanvas import model

# Smallest valid PNG (1x1 transparent pixel).
PNG_1x1_B64 = (
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mNk"
    "YPhfDwAChwGA60e6kgAAAABJRU5ErkJggg=="
)
assert base64.b64decode(PNG_1x1_B64)


def _rand_coord(rng: random.Random) -> float:
    value = rng.uniform(-2000.0, 2000.0)
    return round(value, 3) if rng.random() < 0.8 else value


def random_rect(rng: random.Random, max_side: float = 600.0) -> model.Rect:
    return model.Rect.of(
        _rand_coord(rng), _rand_coord(rng), rng.uniform(1.0, max_side), rng.uniform(1.0, max_side)
    )


def random_bundle(rng: random.Random) -> tuple[model.OutputItem, ...]:
    items = []
    for _ in range(rng.randint(1, 3)):
        mime = rng.choice(sorted(model.MIME_TYPES))
        if mime == "image/png":
            data = PNG_1x1_B64
        elif mime == "application/json":
            data = rng.choice(['{"a": 1}', "[1, 2, 3]", '"text"', "not-json"])
        else:
            data = "".join(rng.choices("hello world\n0123", k=rng.randint(1, 20)))
        items.append(model.OutputItem(mime, data))
    return tuple(items)


def random_canvas(
    seed: int,
    max_cells: int = 8,
    with_environments: bool = True,
    code_only: bool = False,
) -> model.Canvas:
    rng = random.Random(seed)
    canvas = model.new_canvas(canvas_id=f"gen-{seed}", title=f"generated {seed}")
    cell_ids: list[str] = []
    for index in range(rng.randint(0, max_cells)):
        metadata = {}
        if not code_only and rng.random() < 0.15:
            metadata = {"non-code": rng.choice(["markdown", "raw"])}
        cell = model.create_cell(
            canvas, f"step_{index} = {index}", random_rect(rng), metadata=metadata
        )
        cell_ids.append(cell.id)

    if with_environments:
        for index in range(rng.randint(0, 3)):
            model.create_environment(
                canvas,
                random_rect(rng, max_side=900.0),
                rng.choice(["#BF80FF", "#80BFFF", "#FFD27F"]),
                session_id=f"sess-{seed}-{index}",
            )

    executable = [c for c in cell_ids if "non-code" not in canvas.cells[c].metadata]
    for cell_id in executable:
        if rng.random() < 0.7:
            count = rng.randint(1, 9)
            canvas.cells[cell_id].execution_count = count
            out = model.attach_or_update_output(
                canvas, cell_id, random_bundle(rng), (f"sess-{seed}", count)
            )
            if rng.random() < 0.4:
                model.move_output(
                    canvas, out.id, model.Point(_rand_coord(rng), _rand_coord(rng))
                )
            if rng.random() < 0.35:
                model.detach_output(canvas, out.id)
                if rng.random() < 0.5:
                    count += 1
                    canvas.cells[cell_id].execution_count = count
                    model.attach_or_update_output(
                        canvas, cell_id, random_bundle(rng), (f"sess-{seed}", count)
                    )

    # A few deletions keep dangling-provenance paths exercised; orphaned
    # detached outputs only appear when allowed to survive an export.
    for cell_id in list(canvas.cells):
        if rng.random() < (0.0 if code_only else 0.1):
            model.delete_cell(canvas, cell_id)
    return canvas
