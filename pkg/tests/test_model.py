from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codecanvas import model
from codecanvas.model import MAIN, OutputItem, Point, Rect

from helpers.canvasgen import PNG_1x1_B64, random_canvas


def make_canvas() -> model.Canvas:
    return model.new_canvas(canvas_id="c", title="t")


def bundle(text="out") -> tuple[OutputItem, ...]:
    return (OutputItem("text/plain", text),)


# -- geometry ---------------------------------------------------------------


def test_point_rejects_non_finite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(model.ValidationError):
            Point(bad, 0)


def test_rect_requires_positive_dimensions():
    with pytest.raises(model.ValidationError):
        Rect.of(0, 0, 0, 10)
    with pytest.raises(model.ValidationError):
        Rect.of(0, 0, 10, -1)


def test_output_item_validates_mime_and_base64():
    with pytest.raises(model.ValidationError):
        OutputItem("text/html", "x")
    with pytest.raises(model.ValidationError):
        OutputItem("image/png", "@@@not-base64@@@")
    assert OutputItem("image/png", PNG_1x1_B64).mime == "image/png"


# -- create_cell -------------------------------------------------------------


def test_create_cell_first_sequence_slot():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x=1", Rect.of(0, 0, 240, 80))
    assert cell.created_seq == 0
    assert canvas.next_seq == 1
    assert cell.execution_count is None


def test_create_cell_monotone_counter():
    canvas = make_canvas()
    model.create_cell(canvas, "a", Rect.of(0, 0, 240, 80))
    second = model.create_cell(canvas, "b", Rect.of(300, 0, 240, 80))
    assert second.created_seq == 1


def test_create_cell_zero_width_rejected():
    canvas = make_canvas()
    with pytest.raises(model.ValidationError):
        model.create_cell(canvas, "x", Rect.of(0, 0, 0, 80))


# -- move_cell ----------------------------------------------------------------


def test_move_cell_changes_only_origin():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    model.move_cell(canvas, cell.id, Point(500, 300))
    assert cell.frame == Rect.of(500, 300, 240, 80)


def test_move_cell_to_same_point_is_identity():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(10, 20, 240, 80))
    before = model.check_invariants(canvas), cell.frame
    model.move_cell(canvas, cell.id, Point(10, 20))
    assert cell.frame == before[1]


def test_move_cell_unknown_id():
    with pytest.raises(model.UnknownEntityError):
        model.move_cell(make_canvas(), "nope", Point(0, 0))


def test_moving_cell_leaves_attached_output_in_place():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    out = model.attach_or_update_output(canvas, cell.id, bundle(), ("s", 1))
    frame_before = out.frame
    model.move_cell(canvas, cell.id, Point(900, 900))
    assert out.frame == frame_before


# -- resolve_environment ---------------------------------------------------------


def oracle_resolve(canvas: model.Canvas, cell_id: str) -> str:
    """Brute-force routing oracle recomputed from raw coordinates."""
    cell = canvas.cells[cell_id]
    cx = cell.frame.origin.x + cell.frame.width / 2
    cy = cell.frame.origin.y + cell.frame.height / 2
    best = None
    for env in canvas.environments.values():
        x0, y0 = env.region.origin.x, env.region.origin.y
        if x0 <= cx <= x0 + env.region.width and y0 <= cy <= y0 + env.region.height:
            if best is None or env.created_seq > best.created_seq:
                best = env
    return best.id if best else MAIN


def test_resolve_containment():
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 200, 200), "#BF80FF", "s1")
    cell = model.create_cell(canvas, "x", Rect.of(25, 25, 50, 50))  # center (50, 50)
    assert model.resolve_environment(canvas, cell.id) == env.id


def test_resolve_falls_back_to_main():
    canvas = make_canvas()
    model.create_environment(canvas, Rect.of(0, 0, 200, 200), "#BF80FF", "s1")
    cell = model.create_cell(canvas, "x", Rect.of(475, 475, 50, 50))  # center (500, 500)
    assert model.resolve_environment(canvas, cell.id) == MAIN


def test_resolve_overlap_latest_creation_wins():
    # Oracle check under both creation orders: the larger created_seq wins
    # regardless of insertion order.
    for flipped in (False, True):
        canvas = make_canvas()
        regions = [Rect.of(0, 0, 300, 300), Rect.of(50, 50, 300, 300)]
        if flipped:
            regions.reverse()
        first = model.create_environment(canvas, regions[0], "#BF80FF", "s1")
        second = model.create_environment(canvas, regions[1], "#80BFFF", "s2")
        cell = model.create_cell(canvas, "x", Rect.of(100, 100, 100, 100))  # center (150,150)
        assert second.created_seq > first.created_seq
        assert model.resolve_environment(canvas, cell.id) == second.id
        assert oracle_resolve(canvas, cell.id) == second.id


def test_resolve_unknown_cell():
    with pytest.raises(model.UnknownEntityError):
        model.resolve_environment(make_canvas(), "ghost")


@pytest.mark.parametrize("seed", range(40))
def test_resolve_matches_bruteforce_oracle(seed):
    canvas = random_canvas(seed, max_cells=10)
    for cell_id in canvas.cells:
        assert model.resolve_environment(canvas, cell_id) == oracle_resolve(canvas, cell_id)
        # Determinism: repeated calls agree.
        assert model.resolve_environment(canvas, cell_id) == model.resolve_environment(
            canvas, cell_id
        )


# -- create_environment -------------------------------------------------------------


def test_create_environment_record():
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 400, 300), "#BF80FF", "sess-9")
    assert env.region == Rect.of(0, 0, 400, 300)
    assert env.color == "#BF80FF"
    assert env.session_id == "sess-9"
    assert env.created_seq == 0 and canvas.next_seq == 1


def test_identical_regions_coexist_and_tie_break():
    canvas = make_canvas()
    region = Rect.of(0, 0, 200, 200)
    model.create_environment(canvas, region, "#BF80FF", "s1")
    env_b = model.create_environment(canvas, region, "#80BFFF", "s2")
    assert len(canvas.environments) == 2
    cell = model.create_cell(canvas, "x", Rect.of(50, 50, 100, 100))
    assert model.resolve_environment(canvas, cell.id) == env_b.id


def test_create_environment_zero_height_rejected():
    with pytest.raises(model.ValidationError):
        model.create_environment(make_canvas(), Rect.of(0, 0, 100, 0), "#BF80FF", "s")


def test_create_environment_bad_color_rejected():
    with pytest.raises(model.ValidationError):
        model.create_environment(make_canvas(), Rect.of(0, 0, 10, 10), "purple", "s")


# -- move_environment ----------------------------------------------------------------


def test_move_environment_carries_contained_cell():
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 200, 200), "#BF80FF", "s")
    cell = model.create_cell(canvas, "x", Rect.of(25, 25, 50, 50))  # center (50,50)
    model.move_environment(canvas, env.id, (100, 0))
    assert env.region.origin == Point(100, 0)
    assert cell.frame.center == Point(150, 50)


def test_move_environment_ignores_outside_cell():
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 200, 200), "#BF80FF", "s")
    outside = model.create_cell(canvas, "x", Rect.of(475, 475, 50, 50))
    model.move_environment(canvas, env.id, (100, 50))
    assert outside.frame.origin == Point(475, 475)


def test_move_environment_zero_delta_identity():
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 200, 200), "#BF80FF", "s")
    cell = model.create_cell(canvas, "x", Rect.of(10, 10, 50, 50))
    model.move_environment(canvas, env.id, (0, 0))
    assert env.region == Rect.of(0, 0, 200, 200)
    assert cell.frame == Rect.of(10, 10, 50, 50)


def test_move_environment_containment_from_pre_move_geometry():
    # A cell sitting where the region lands must not be dragged along.
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 100, 100), "#BF80FF", "s")
    future_resident = model.create_cell(canvas, "x", Rect.of(175, 25, 50, 50))
    model.move_environment(canvas, env.id, (150, 0))
    assert future_resident.frame.origin == Point(175, 25)


@settings(max_examples=60, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    dx=st.floats(-1e5, 1e5, allow_nan=False),
    dy=st.floats(-1e5, 1e5, allow_nan=False),
)
def test_move_environment_is_rigid(seed, dx, dy):
    canvas = random_canvas(seed, max_cells=6)
    if not canvas.environments:
        return
    env_id = sorted(canvas.environments)[0]
    region = canvas.environments[env_id].region
    contained_cells = {
        c.id: c.frame for c in canvas.cells.values() if region.contains(c.frame.center)
    }
    contained_outputs = {
        o.id: o.frame for o in canvas.outputs.values() if region.contains(o.frame.center)
    }
    origin_before = region.origin
    model.move_environment(canvas, env_id, (dx, dy))
    origin_after = canvas.environments[env_id].region.origin
    for cell_id, frame in contained_cells.items():
        before = (frame.origin.x - origin_before.x, frame.origin.y - origin_before.y)
        now = canvas.cells[cell_id].frame.origin
        after = (now.x - origin_after.x, now.y - origin_after.y)
        assert before == pytest.approx(after)
    for output_id, frame in contained_outputs.items():
        before = (frame.origin.x - origin_before.x, frame.origin.y - origin_before.y)
        now = canvas.outputs[output_id].frame.origin
        after = (now.x - origin_after.x, now.y - origin_after.y)
        assert before == pytest.approx(after)


# -- outputs ---------------------------------------------------------------------------


def test_first_execution_places_output_below_cell():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(100, 50, 240, 80))
    out = model.attach_or_update_output(canvas, cell.id, bundle(), ("s", 1))
    assert out.frame.origin == Point(100, 50 + 80 + model.OUTPUT_GAP)
    assert out.frame.width == 240
    assert out.frame.height == model.DEFAULT_OUTPUT_HEIGHT
    assert out.produced_by == ("s", 1)


def test_reexecution_after_user_move_keeps_id_and_frame():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    first = model.attach_or_update_output(canvas, cell.id, bundle("one"), ("s", 1))
    model.move_output(canvas, first.id, Point(900, 50))
    second = model.attach_or_update_output(canvas, cell.id, bundle("two"), ("s", 2))
    assert second.id == first.id
    assert second.frame.origin == Point(900, 50)
    assert second.bundle == bundle("two")
    assert second.produced_by == ("s", 2)
    assert len(canvas.outputs) == 1


def test_detached_output_triggers_fresh_attached_one():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    first = model.attach_or_update_output(canvas, cell.id, bundle("one"), ("s", 1))
    model.detach_output(canvas, first.id)
    second = model.attach_or_update_output(canvas, cell.id, bundle("two"), ("s", 2))
    assert second.id != first.id
    assert first.bundle == bundle("one")
    assert len(canvas.outputs) == 2


def test_detach_then_reexecute_counts_two_outputs():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    out = model.attach_or_update_output(canvas, cell.id, bundle("v1"), ("s", 1))
    model.detach_output(canvas, out.id)
    model.attach_or_update_output(canvas, cell.id, bundle("v2"), ("s", 2))
    mine = [o for o in canvas.outputs.values() if o.origin_cell_id == cell.id]
    assert len(mine) == 2
    assert sorted(o.detached for o in mine) == [False, True]


def test_detach_twice_errors():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    out = model.attach_or_update_output(canvas, cell.id, bundle(), ("s", 1))
    model.detach_output(canvas, out.id)
    with pytest.raises(model.OutputStateError):
        model.detach_output(canvas, out.id)


def test_detached_output_survives_origin_deletion():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    out = model.attach_or_update_output(canvas, cell.id, bundle(), ("s", 1))
    model.detach_output(canvas, out.id)
    model.delete_cell(canvas, cell.id)
    assert out.id in canvas.outputs
    assert canvas.outputs[out.id].origin_cell_id == cell.id  # provenance retained


def test_attach_unknown_cell():
    with pytest.raises(model.UnknownEntityError):
        model.attach_or_update_output(make_canvas(), "ghost", bundle(), ("s", 1))


# -- deletes ---------------------------------------------------------------------------------


def test_delete_cell_removes_attached_output():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 240, 80))
    model.attach_or_update_output(canvas, cell.id, bundle(), ("s", 1))
    removed = model.delete_cell(canvas, cell.id)
    assert len(removed) == 1
    assert not canvas.cells and not canvas.outputs


def test_delete_environment_keeps_cells():
    canvas = make_canvas()
    env = model.create_environment(canvas, Rect.of(0, 0, 500, 500), "#BF80FF", "s")
    ids = [model.create_cell(canvas, "x", Rect.of(10 + 60 * i, 10, 50, 50)).id for i in range(3)]
    model.delete_environment(canvas, env.id)
    assert not canvas.environments
    assert all(cid in canvas.cells for cid in ids)


def test_delete_unknown_targets():
    canvas = make_canvas()
    for fn in (model.delete_cell, model.delete_output, model.delete_environment):
        with pytest.raises(model.UnknownEntityError):
            fn(canvas, "ghost")


# -- invariants under random operation interleavings -------------------------------------------


def _random_ops(canvas: model.Canvas, rng: random.Random, steps: int) -> None:
    for _ in range(steps):
        roll = rng.random()
        try:
            if roll < 0.3:
                model.create_cell(
                    canvas, "x", Rect.of(rng.uniform(-500, 500), rng.uniform(-500, 500), 100, 60)
                )
            elif roll < 0.45 and canvas.cells:
                cell_id = rng.choice(sorted(canvas.cells))
                model.attach_or_update_output(
                    canvas, cell_id, bundle(str(rng.random())), ("s", rng.randint(1, 99))
                )
            elif roll < 0.55 and canvas.outputs:
                out_id = rng.choice(sorted(canvas.outputs))
                if not canvas.outputs[out_id].detached:
                    model.detach_output(canvas, out_id)
            elif roll < 0.65:
                model.create_environment(
                    canvas,
                    Rect.of(rng.uniform(-500, 500), rng.uniform(-500, 500), 200, 200),
                    "#BF80FF",
                    f"s{rng.randint(0, 9)}",
                )
            elif roll < 0.75 and canvas.cells:
                model.delete_cell(canvas, rng.choice(sorted(canvas.cells)))
            elif roll < 0.8 and canvas.environments:
                model.delete_environment(canvas, rng.choice(sorted(canvas.environments)))
            elif roll < 0.9 and canvas.environments:
                model.move_environment(
                    canvas,
                    rng.choice(sorted(canvas.environments)),
                    (rng.uniform(-100, 100), rng.uniform(-100, 100)),
                )
            elif canvas.outputs:
                model.delete_output(canvas, rng.choice(sorted(canvas.outputs)))
        except model.OutputStateError:
            pass


@pytest.mark.parametrize("seed", range(25))
def test_sequence_monotonicity_under_random_interleavings(seed):
    canvas = make_canvas()
    _random_ops(canvas, random.Random(seed), 60)
    seqs = [c.created_seq for c in canvas.cells.values()]
    seqs += [e.created_seq for e in canvas.environments.values()]
    assert len(seqs) == len(set(seqs))  # strict total order when sorted
    assert all(s < canvas.next_seq for s in seqs)
    assert model.check_invariants(canvas) == []


@pytest.mark.parametrize("seed", range(25))
def test_at_most_one_attached_under_random_interleavings(seed):
    canvas = make_canvas()
    _random_ops(canvas, random.Random(seed + 1000), 80)
    per_cell: dict[str, int] = {}
    for out in canvas.outputs.values():
        if not out.detached:
            per_cell[out.origin_cell_id] = per_cell.get(out.origin_cell_id, 0) + 1
    assert all(count <= 1 for count in per_cell.values())


@pytest.mark.parametrize("seed", range(15))
def test_detached_bundles_forever_immutable(seed):
    canvas = make_canvas()
    rng = random.Random(seed + 2000)
    _random_ops(canvas, rng, 40)
    frozen = {
        o.id: (tuple(o.bundle), o.produced_by)
        for o in canvas.outputs.values()
        if o.detached
    }
    _random_ops(canvas, rng, 60)
    for out_id, (old_bundle, old_produced) in frozen.items():
        if out_id in canvas.outputs:
            out = canvas.outputs[out_id]
            assert tuple(out.bundle) == old_bundle
            assert out.produced_by == old_produced
            assert out.detached


def test_check_invariants_flags_duplicate_attached():
    canvas = make_canvas()
    cell = model.create_cell(canvas, "x", Rect.of(0, 0, 100, 50))
    out = model.attach_or_update_output(canvas, cell.id, bundle(), ("s", 1))
    clone = model.OutputCell(
        id="out-99",
        origin_cell_id=cell.id,
        frame=out.frame,
        bundle=out.bundle,
        detached=False,
        produced_by=("s", 2),
    )
    canvas.outputs[clone.id] = clone
    problems = model.check_invariants(canvas)
    assert any("two attached outputs" in p for p in problems)


def test_content_bbox():
    canvas = make_canvas()
    assert model.content_bbox(canvas) is None
    model.create_cell(canvas, "x", Rect.of(0, 0, 100, 100))
    model.create_cell(canvas, "y", Rect.of(400, 300, 100, 100))
    box = model.content_bbox(canvas)
    assert box == Rect.of(0, 0, 500, 400)
