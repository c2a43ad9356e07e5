import json

import numpy as np
import pytest

from sceneforge import dsl, interp
from sceneforge.errors import ExecError
from sceneforge.geometry import Aabb
from sceneforge.interp import Layout, Room
from sceneforge.library import Library

LIB = Library.standard()
ROOM = Room.from_bounds(Aabb(-50, -50, 50, 50))


def run(src: str) -> Layout:
    return interp.execute(dsl.parse(src), LIB, ROOM)


def boxes(layout: Layout):
    return [o.box.as_list() for o in layout.objects]


class TestExecute:
    def test_single_bed(self):
        lay = run("bed_1 = furniture(0,0,2,1.6)")
        (obj,) = lay.objects
        assert obj.category == "bed"
        assert obj.role == "primary"
        assert obj.dependency_target is None
        assert obj.box == Aabb(0, 0, 2, 1.6)

    def test_parallel_dependent(self):
        lay = run("t_1 = furniture(0,0,2,2)\nc = parallel(t_1, 4, 4)")
        assert len(lay.objects) == 2
        anchor, placed = lay.objects
        assert placed.role == "dependent"
        assert placed.dependency_target == anchor.id
        assert placed.box == Aabb(4, 0, 6, 2)

    def test_grid_identity_consumes_ref(self):
        lay = run("t_1 = furniture(0,0,2,2)\ng_1 = grid(t_1, 1, 1, 3, 3)")
        assert boxes(lay) == [[0, 0, 2, 2]]
        assert lay.objects[0].role == "primary"

    def test_determinism(self):
        src = "a_1 = furniture(0,0,1,1)\nb_1 = grid(a_1, 2, 3, 1.25, 1.5)"
        assert run(src).to_dict() == run(src).to_dict()

    def test_provenance_reparses_and_targets_precede(self):
        lay = run(
            "table_1 = furniture(0,0,2,2)\n"
            "chair_1 = cluster_placement(table_1, [(-2,0),(2,0)], (1,1))\n"
            "lamp_1 = parallel(table_1, 5, 1)"
        )
        for obj in lay.objects:
            reparsed = dsl.parse(obj.instantiating_call)
            assert len(reparsed.statements) == 1
            if obj.role == "dependent":
                assert obj.dependency_target is not None
                assert obj.dependency_target < obj.id

    def test_unresolved_function(self):
        with pytest.raises(ExecError, match="not in library"):
            interp.execute(dsl.parse("a_1 = furniture(0,0,1,1)\nb_1 = grid(a_1,2,2,1,1)"),
                           Library.bootstrap(), ROOM)

    def test_loop_bound_must_be_whole(self):
        src = (
            "def f_0(a_0) {\n"
            "  out = []\n"
            "  for i in 0..a_0 {\n"
            "    out = out + [furniture(i, 0.0, i + 1.0, 1.0)]\n"
            "  }\n"
            "  return out\n"
            "}\n"
            "x_1 = f_0(2.5)\n"
        )
        program = dsl.parse(src)
        with pytest.raises(ExecError, match="whole"):
            interp.execute(program, LIB, ROOM)

    def test_funcdef_loop_executes(self):
        src = (
            "def f_0(a_0) {\n"
            "  out = []\n"
            "  for i in 0..a_0 {\n"
            "    out = out + [furniture(i * 2.0, 0.0, i * 2.0 + 1.0, 1.0)]\n"
            "  }\n"
            "  return out\n"
            "}\n"
            "shelf_1 = f_0(3)\n"
        )
        lay = interp.execute(dsl.parse(src), LIB, ROOM)
        assert boxes(lay) == [[0, 0, 1, 1], [2, 0, 3, 1], [4, 0, 5, 1]]
        assert all(o.category == "shelf" for o in lay.objects)

    def test_division_by_zero(self):
        with pytest.raises(ExecError, match="division"):
            run("x_1 = furniture(1 / 0, 0, 1, 1)")


class TestParallel:
    def test_displacement_right(self):
        lay = run("a_1 = furniture(0,0,2,2)\nb_1 = parallel(a_1, 4, 4)")
        assert boxes(lay)[1] == [4, 0, 6, 2]

    def test_zero_distance_reproduces_anchor(self):
        lay = run("a_1 = furniture(0,0,2,2)\nb_1 = parallel(a_1, 0, 1, (2,2))")
        assert boxes(lay)[1] == [0, 0, 2, 2]

    def test_down_with_size(self):
        lay = run("a_1 = furniture(0,0,2,2)\nb_1 = parallel(a_1, 3, 2, (1,1))")
        assert boxes(lay)[1] == [0.5, -2.5, 1.5, -1.5]

    def test_invalid_direction(self):
        with pytest.raises(ExecError, match="direction"):
            run("a_1 = furniture(0,0,2,2)\nb_1 = parallel(a_1, 3, 5)")

    def test_non_positive_size(self):
        with pytest.raises(ExecError, match="positive"):
            run("a_1 = furniture(0,0,2,2)\nb_1 = parallel(a_1, 3, 1, (0,1))")


class TestAlign:
    def test_count_one_is_ref(self):
        lay = run("a_1 = furniture(0,0,1,1)\nb_1 = align(a_1, 1, 2, 4)")
        assert boxes(lay) == [[0, 0, 1, 1]]

    def test_three_across(self):
        lay = run("a_1 = furniture(0,0,1,1)\nb_1 = align(a_1, 3, 2, 4)")
        assert boxes(lay) == [[0, 0, 1, 1], [2, 0, 3, 1], [4, 0, 5, 1]]
        roles = [o.role for o in lay.objects]
        assert roles == ["primary", "dependent", "dependent"]
        assert [o.dependency_target for o in lay.objects] == [None, 0, 0]

    def test_zero_distance_coincident(self):
        lay = run("a_1 = furniture(0,0,1,1)\nb_1 = align(a_1, 2, 0, 1)")
        assert boxes(lay) == [[0, 0, 1, 1], [0, 0, 1, 1]]

    def test_count_below_one(self):
        with pytest.raises(ExecError, match="count"):
            run("a_1 = furniture(0,0,1,1)\nb_1 = align(a_1, 0, 2, 4)")

    def test_ref_used_elsewhere_not_consumed(self):
        lay = run(
            "a_1 = furniture(0,0,1,1)\n"
            "b_1 = align(a_1, 2, 2, 4)\n"
            "c_1 = parallel(a_1, 5, 1)"
        )
        # the ref stays emitted (coincident with the first align output)
        assert len(lay.objects) == 4
        assert boxes(lay)[0] == [0, 0, 1, 1]
        assert boxes(lay)[1] == [0, 0, 1, 1]


class TestGrid:
    def test_identity(self):
        lay = run("a_1 = furniture(1,1,2,2)\nb_1 = grid(a_1, 1, 1, 5, 5)")
        assert boxes(lay) == [[1, 1, 2, 2]]

    def test_one_by_two(self):
        lay = run("a_1 = furniture(-0.5,-0.5,0.5,0.5)\nb_1 = grid(a_1, 1, 2, 4, 0)")
        assert [o.box.center for o in lay.objects] == [(-2, 0), (2, 0)]

    def test_two_by_two_row_major(self):
        lay = run("a_1 = furniture(-0.5,-0.5,0.5,0.5)\nb_1 = grid(a_1, 2, 2, 2, 2)")
        assert [o.box.center for o in lay.objects] == [(-1, 1), (1, 1), (-1, -1), (1, -1)]

    def test_rows_below_one(self):
        with pytest.raises(ExecError):
            run("a_1 = furniture(0,0,1,1)\nb_1 = grid(a_1, 0, 2, 1, 1)")


class TestGridWithOffset:
    def test_zero_offsets_equal_grid(self):
        base = run("a_1 = furniture(0,0,1,1)\nb_1 = grid(a_1, 2, 3, 1.5, 2)")
        off = run(
            "a_1 = furniture(0,0,1,1)\nb_1 = grid_with_offset(a_1, 2, 3, 1.5, 2, [0,0], [0,0,0])"
        )
        assert boxes(base) == boxes(off)

    def test_row_offsets(self):
        lay = run("a_1 = furniture(-0.5,-0.5,0.5,0.5)\nb_1 = grid_with_offset(a_1, 1, 2, 4, 0, [1])")
        assert [o.box.center for o in lay.objects] == [(-1, 0), (3, 0)]

    def test_col_offsets(self):
        lay = run(
            "a_1 = furniture(-0.5,-0.5,0.5,0.5)\nb_1 = grid_with_offset(a_1, 2, 1, 0, 2, [0,0], [0.5])"
        )
        assert [o.box.center for o in lay.objects] == [(0, 1.5), (0, -0.5)]

    def test_offset_length_mismatch(self):
        with pytest.raises(ExecError, match="length"):
            run("a_1 = furniture(0,0,1,1)\nb_1 = grid_with_offset(a_1, 2, 2, 1, 1, [1])")


class TestSymmetrical:
    def test_four_centers(self):
        lay = run("s_1 = symmetrical((0,0), 2, 1, (1,1))")
        assert [o.box.center for o in lay.objects] == [(2, 1), (2, -1), (-2, 1), (-2, -1)]
        assert all(o.role == "primary" for o in lay.objects)

    def test_degenerate_distances(self):
        lay = run("s_1 = symmetrical((3,3), 0, 0, (1,1))")
        assert all(o.box.center == (3, 3) for o in lay.objects)

    def test_reflection_invariant_as_set(self):
        a = {tuple(b) for b in boxes(run("s_1 = symmetrical((0,0), 2, 1, (1,1))"))}
        b = {tuple(b) for b in boxes(run("s_1 = symmetrical((0,0), -2, -1, (1,1))"))}
        assert a == b

    def test_non_positive_size(self):
        with pytest.raises(ExecError, match="positive"):
            run("s_1 = symmetrical((0,0), 1, 1, (1,-1))")


class TestClusterPlacement:
    def test_single_zero_offset_coincides(self):
        lay = run("a_1 = furniture(0.5,0.5,1.5,1.5)\nb_1 = cluster_placement(a_1, [(0,0)])")
        assert boxes(lay)[1] == boxes(lay)[0]

    def test_offsets_with_size(self):
        lay = run("a_1 = furniture(0,0,2,2)\nb_1 = cluster_placement(a_1, [(-2,0),(2,0)], (1,1))")
        assert [o.box.center for o in lay.objects[1:]] == [(-1, 1), (3, 1)]

    def test_ring_depends_on_anchor(self):
        lay = run(
            "table_1 = furniture(0,0,2,2)\n"
            "stool_1 = cluster_placement(table_1, [(-2,0),(2,0),(0,2),(0,-2)], (0.5,0.5))"
        )
        assert [o.dependency_target for o in lay.objects[1:]] == [0, 0, 0, 0]
        assert all(o.category == "stool" for o in lay.objects[1:])

    def test_empty_offsets(self):
        with pytest.raises(ExecError, match="offsets"):
            run("a_1 = furniture(0,0,2,2)\nb_1 = cluster_placement(a_1, [])")


class TestReductionLaws:
    def test_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            x0, y0 = rng.uniform(-10, 10, 2)
            w, h = rng.uniform(0.25, 3.0, 2)
            d = rng.uniform(0, 5)
            box = f"furniture({x0},{y0},{x0+w},{y0+h})"
            ref = run(f"a_1 = {box}").objects[0].box

            lay = run(f"a_1 = {box}\nb_1 = grid(a_1, 1, 1, {d}, {d})")
            assert lay.objects[0].box == ref

            lay = run(f"a_1 = {box}\nb_1 = align(a_1, 1, {d}, 4)")
            assert lay.objects[0].box == ref

            lay = run(f"a_1 = {box}\nb_1 = parallel(a_1, 0, 2)")
            assert lay.objects[1].box.center == ref.center

            g = run(f"a_1 = {box}\nb_1 = grid(a_1, 2, 2, {d}, {d})")
            go = run(f"a_1 = {box}\nb_1 = grid_with_offset(a_1, 2, 2, {d}, {d}, [0,0], [0,0])")
            assert boxes(g) == boxes(go)

    def test_translation_equivariance(self):
        rng = np.random.default_rng(13)
        src = "a_1 = furniture({x},{y},{x2},{y2})\nb_1 = grid(a_1, 2, 3, 2, 1)\nc_1 = parallel(a_1, 1, 4)"
        for _ in range(50):
            x, y = rng.uniform(-5, 5, 2)
            dx, dy = rng.uniform(-3, 3, 2)
            base = run(src.format(x=x, y=y, x2=x + 1, y2=y + 1))
            moved = run(src.format(x=x + dx, y=y + dy, x2=x + dx + 1, y2=y + dy + 1))
            for a, b in zip(base.objects, moved.objects):
                np.testing.assert_allclose(
                    np.array(b.box.as_list()),
                    np.array(a.box.as_list()) + np.array([dx, dy, dx, dy]),
                    atol=1e-9,
                )


class TestLayoutJson:
    def test_roundtrip_matches_schema(self):
        lay = run("bed_1 = furniture(0,0,2,1.6)\nns = parallel(bed_1, 2, 4, (0.5,0.5))")
        d = lay.to_dict()
        assert set(d) == {"room_bounds", "walls", "objects"}
        assert d["objects"][0] == {
            "id": 0,
            "category": "bed",
            "box": [0.0, 0.0, 2.0, 1.6],
            "role": "primary",
            "target": None,
            "call": "furniture(0.0, 0.0, 2.0, 1.6)",
        }
        assert d["walls"][0].keys() == {"p1", "p2"}
        restored = Layout.from_dict(json.loads(json.dumps(d)))
        assert restored.to_dict() == d

    def test_room_json_default_walls(self):
        room = Room.from_dict({"room_bounds": [0, 0, 4, 3]})
        assert len(room.walls) == 4
