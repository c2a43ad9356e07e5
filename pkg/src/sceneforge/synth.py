"""Seeded synthetic scenes, corpora and catalogs.

Everything here is deterministic given the RNG seed. Coordinates and
spacings are kept on a 0.25 m grid (dyadic, exactly representable), so
programs execute and reconstruct bit-exactly; pattern blocks get disjoint
cells and per-program unique categories, so the heuristic recognizer's
grouping is unambiguous.
"""

from __future__ import annotations

import math

import numpy as np

from . import dsl, interp
from .assemble import AssetCatalog, AssetEntry
from .evaluate import PAPER_CATEGORIES
from .geometry import Aabb, rotate_points
from .interp import Layout, PlacedObject, Room
from .library import Library
from .pose.data import PoseExample

_CELL = 12.0

PATTERN_KINDS = ("row", "grid", "grid_offset", "symmetrical", "cluster", "pair", "single")


def _dyadic(rng, lo: float, hi: float, step: float = 0.25) -> float:
    n = int(round((hi - lo) / step))
    return lo + step * int(rng.integers(0, n + 1))


def _num(v: float) -> dsl.Number:
    return dsl.Number(float(v))


def _furniture_stmt(name: str, box: Aabb) -> dsl.Assign:
    return dsl.Assign(name, dsl.Call("furniture", tuple(_num(c) for c in box.as_list())))


class _Names:
    def __init__(self):
        self.counts: dict[str, int] = {}

    def fresh(self, category: str) -> str:
        self.counts[category] = self.counts.get(category, 0) + 1
        return f"{category}_{self.counts[category]}"


def _block_row(rng, names, category, cx, cy):
    k = int(rng.integers(3, 7))
    spacing = _dyadic(rng, 1.0, 3.0)
    w, h = _dyadic(rng, 0.5, 2.0), _dyadic(rng, 0.5, 2.0)
    direction = int(rng.integers(1, 5))
    ref = names.fresh(category)
    out = names.fresh(category)
    box = Aabb.from_center(cx, cy, w, h)
    return [
        _furniture_stmt(ref, box),
        dsl.Assign(out, dsl.Call("align", (dsl.Var(ref), _num(k), _num(spacing), _num(direction)))),
    ]


def _block_grid(rng, names, category, cx, cy):
    rows, cols = int(rng.integers(2, 4)), int(rng.integers(2, 5))
    hd, vd = _dyadic(rng, 1.0, 3.0), _dyadic(rng, 1.0, 3.0)
    w, h = _dyadic(rng, 0.5, 1.5), _dyadic(rng, 0.5, 1.5)
    ref = names.fresh(category)
    out = names.fresh(category)
    return [
        _furniture_stmt(ref, Aabb.from_center(cx, cy, w, h)),
        dsl.Assign(
            out,
            dsl.Call("grid", (dsl.Var(ref), _num(rows), _num(cols), _num(hd), _num(vd))),
        ),
    ]


def _block_grid_offset(rng, names, category, cx, cy):
    rows, cols = int(rng.integers(2, 4)), int(rng.integers(2, 4))
    hd, vd = _dyadic(rng, 1.5, 3.0), _dyadic(rng, 1.5, 3.0)
    w, h = _dyadic(rng, 0.5, 1.0), _dyadic(rng, 0.5, 1.0)
    ref = names.fresh(category)
    out = names.fresh(category)
    row_mode = bool(rng.integers(0, 2))
    if row_mode:
        offsets = [0.0] + [_dyadic(rng, 0.25, 1.0) for _ in range(rows - 1)]
        extra = (dsl.ListLit(tuple(_num(o) for o in offsets)),)
    else:
        offsets = [0.0] + [_dyadic(rng, 0.25, 1.0) for _ in range(cols - 1)]
        zeros = dsl.ListLit(tuple(_num(0.0) for _ in range(rows)))
        extra = (zeros, dsl.ListLit(tuple(_num(o) for o in offsets)))
    call = dsl.Call(
        "grid_with_offset",
        (dsl.Var(ref), _num(rows), _num(cols), _num(hd), _num(vd)) + extra,
    )
    return [_furniture_stmt(ref, Aabb.from_center(cx, cy, w, h)), dsl.Assign(out, call)]


def _block_symmetrical(rng, names, category, cx, cy):
    dx, dy = _dyadic(rng, 0.75, 2.5), _dyadic(rng, 0.75, 2.5)
    w, h = _dyadic(rng, 0.5, 1.25), _dyadic(rng, 0.5, 1.25)
    out = names.fresh(category)
    call = dsl.Call(
        "symmetrical",
        (dsl.TupleLit((_num(cx), _num(cy))), _num(dx), _num(dy), dsl.TupleLit((_num(w), _num(h)))),
    )
    return [dsl.Assign(out, call)]


def _block_cluster(rng, names, category, member_category, cx, cy):
    aw, ah = _dyadic(rng, 2.0, 3.0), _dyadic(rng, 2.0, 3.0)
    mw, mh = _dyadic(rng, 0.5, 1.0), _dyadic(rng, 0.5, 1.0)
    pairs = int(rng.integers(1, 3))
    offsets = []
    for _ in range(pairs):
        ox, oy = _dyadic(rng, 0.0, 2.5), _dyadic(rng, 0.25, 2.5)
        offsets.extend([(ox, oy), (-ox, -oy)])
    anchor = names.fresh(category)
    member = names.fresh(member_category)
    call = dsl.Call(
        "cluster_placement",
        (
            dsl.Var(anchor),
            dsl.ListLit(tuple(dsl.TupleLit((_num(ox), _num(oy))) for ox, oy in offsets)),
            dsl.TupleLit((_num(mw), _num(mh))),
        ),
    )
    return [_furniture_stmt(anchor, Aabb.from_center(cx, cy, aw, ah)), dsl.Assign(member, call)]


def _block_pair(rng, names, category, cx, cy):
    w, h = _dyadic(rng, 0.5, 2.0), _dyadic(rng, 0.5, 2.0)
    distance = _dyadic(rng, 1.0, 3.0)
    direction = int(rng.integers(1, 5))
    a = names.fresh(category)
    b = names.fresh(category)
    return [
        _furniture_stmt(a, Aabb.from_center(cx, cy, w, h)),
        dsl.Assign(b, dsl.Call("parallel", (dsl.Var(a), _num(distance), _num(direction)))),
    ]


def _block_single(rng, names, category, cx, cy):
    w, h = _dyadic(rng, 0.5, 2.5), _dyadic(rng, 0.5, 2.5)
    return [_furniture_stmt(names.fresh(category), Aabb.from_center(cx, cy, w, h))]


def random_pattern_program(rng, kinds=PATTERN_KINDS, max_blocks: int = 3):
    """A random stdlib-only program of 1..max_blocks pattern blocks, each in
    its own 12 m cell with a category unique to the program; returns
    (program, room). Executing it under the standard library gives a layout
    the heuristic recognizer reconstructs with mIoU 1.0."""
    n_blocks = int(rng.integers(1, max_blocks + 1))
    pool = list(PAPER_CATEGORIES)
    rng.shuffle(pool)
    names = _Names()
    statements: list = []
    cols = math.ceil(math.sqrt(n_blocks))
    for b in range(n_blocks):
        kind = kinds[int(rng.integers(0, len(kinds)))]
        cx = (b % cols) * _CELL + _CELL / 2.0
        cy = (b // cols) * _CELL + _CELL / 2.0
        if kind == "cluster":
            stmts = _block_cluster(rng, names, pool.pop(), pool.pop(), cx, cy)
        else:
            builder = {
                "row": _block_row,
                "grid": _block_grid,
                "grid_offset": _block_grid_offset,
                "symmetrical": _block_symmetrical,
                "pair": _block_pair,
                "single": _block_single,
            }[kind]
            stmts = builder(rng, names, pool.pop(), cx, cy)
        statements.extend(stmts)
    rows = math.ceil(n_blocks / cols)
    room = Room.from_bounds(Aabb(0.0, 0.0, cols * _CELL, max(rows, 1) * _CELL))
    return dsl.Program(tuple(statements)), room


def pattern_corpus(rng, n: int, kinds=("row", "grid"), max_blocks: int = 2) -> list:
    """Layouts generated by executing random pattern programs under the
    standard library (the wake-sleep loop re-learns them from bootstrap)."""
    lib = Library.standard()
    out = []
    for _ in range(n):
        program, room = random_pattern_program(rng, kinds=kinds, max_blocks=max_blocks)
        out.append(interp.execute(program, lib, room))
    return out


# ---------------------------------------------------------------------------
# pose dataset: tables at known theta, chairs labeled with their table's theta
# ---------------------------------------------------------------------------

_TABLE_FOOTPRINT = (3.0, 1.0)  # width, depth; high aspect so the box leaks theta
_CHAIR_FOOTPRINT = (0.5, 0.5)  # square, so chair boxes alone underdetermine it
_RING = ((0.0, 1.05), (0.0, -1.05), (1.55, 0.0), (-1.55, 0.0))


def _rotated_aabb(cx: float, cy: float, w: float, d: float, theta: float) -> Aabb:
    corners = np.array(
        [[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]], dtype=np.float64
    )
    pts = rotate_points(corners, theta) + np.array([cx, cy])
    return Aabb(float(pts[:, 0].min()), float(pts[:, 1].min()), float(pts[:, 0].max()), float(pts[:, 1].max()))


def pose_synthetic_scene(rng) -> PoseExample:
    """One table at theta = 5k for uniform-random k in [0, 18), chairs around
    it labeled with the table's bin, plus axis-aligned clutter. Thetas sit on
    the bin lattice so teacher-forced conditioning matches what the argmax
    rule feeds back at inference."""
    room = Room.from_bounds(Aabb(0.0, 0.0, 10.0, 8.0))
    k = int(rng.integers(0, 18))
    theta = 5.0 * k
    tcx = float(rng.uniform(3.0, 7.0))
    tcy = float(rng.uniform(2.5, 5.5))
    tw, td = _TABLE_FOOTPRINT
    objects = [
        PlacedObject(
            0,
            "table",
            _rotated_aabb(tcx, tcy, tw, td, theta),
            interp.ROLE_PRIMARY,
            None,
            "furniture(0.0, 0.0, 2.0, 1.0)",
        )
    ]
    thetas = {0: theta}
    labels = {0: k}

    n_chairs = int(rng.integers(2, 5))
    ring = list(_RING)
    call_offsets = []
    chair_ids = []
    for _ in range(n_chairs):
        off = ring.pop(int(rng.integers(0, len(ring))))
        world = rotate_points(np.array([off]), theta)[0]
        jitter = rng.uniform(-0.15, 0.15, size=2)
        ccx, ccy = tcx + world[0] + jitter[0], tcy + world[1] + jitter[1]
        oid = len(objects)
        call_offsets.append((round(float(world[0]), 2), round(float(world[1]), 2)))
        objects.append(
            PlacedObject(
                oid,
                "chair",
                _rotated_aabb(ccx, ccy, *_CHAIR_FOOTPRINT, theta),
                interp.ROLE_DEPENDENT,
                0,
                "",
            )
        )
        chair_ids.append(oid)
        thetas[oid] = theta
        labels[oid] = k
    call = dsl.Call(
        "cluster_placement",
        (
            dsl.Var("table_1"),
            dsl.ListLit(tuple(dsl.TupleLit((_num(ox), _num(oy))) for ox, oy in call_offsets)),
            dsl.TupleLit((_num(_CHAIR_FOOTPRINT[0]), _num(_CHAIR_FOOTPRINT[1]))),
        ),
    )
    call_text = dsl.format_expr(call)
    for oid in chair_ids:
        objects[oid].instantiating_call = call_text

    for _ in range(int(rng.integers(0, 3))):
        w, h = _dyadic(rng, 0.5, 1.0), _dyadic(rng, 0.5, 1.0)
        ncx = float(rng.uniform(0.5 + w / 2, 9.5 - w / 2))
        ncy = float(rng.uniform(0.5 + h / 2, 7.5 - h / 2))
        oid = len(objects)
        objects.append(
            PlacedObject(
                oid,
                "nightstand",
                Aabb.from_center(ncx, ncy, w, h),
                interp.ROLE_PRIMARY,
                None,
                "furniture(0.0, 0.0, 1.0, 1.0)",
            )
        )
        thetas[oid] = 0.0
        labels[oid] = 0
    layout = Layout(objects, room.walls, room.bounds)
    return PoseExample(layout, thetas, labels)


def pose_synthetic_dataset(rng, n_scenes: int) -> list:
    return [pose_synthetic_scene(rng) for _ in range(n_scenes)]


# ---------------------------------------------------------------------------
# footprint point scenes (input format of the orientation extractor)
# ---------------------------------------------------------------------------

def _footprint_points(cx, cy, w, d, theta) -> list:
    corners = np.array(
        [[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]], dtype=np.float64
    )
    mids = (corners + np.roll(corners, -1, axis=0)) / 2.0
    pts = rotate_points(np.vstack([corners, mids]), theta) + np.array([cx, cy])
    return [[float(x), float(y)] for x, y in pts]


def points_scene(rng) -> dict:
    """A scene of per-object footprint point sets: a rotated table, a row of
    three chairs sharing its angle, and an axis-aligned bed."""
    room = Room.from_bounds(Aabb(0.0, 0.0, 12.0, 9.0))
    theta = float(rng.integers(0, 36) * 5)
    tcx, tcy = _dyadic(rng, 4.0, 8.0), _dyadic(rng, 4.5, 6.0)
    objects = [{"category": "table", "points": _footprint_points(tcx, tcy, 2.0, 1.0, theta)}]
    chair_theta = float(rng.integers(0, 36) * 5)
    row_y = _dyadic(rng, 1.0, 2.5)
    row_x = _dyadic(rng, 1.5, 4.0)
    spacing = _dyadic(rng, 1.25, 2.0)
    for i in range(3):
        objects.append(
            {
                "category": "chair",
                "points": _footprint_points(row_x + i * spacing, row_y, 0.6, 0.5, chair_theta),
            }
        )
    objects.append({"category": "bed", "points": _footprint_points(10.0, 7.0, 2.0, 1.6, 0.0)})
    scene = room.to_dict()
    scene["objects"] = objects
    return scene


# ---------------------------------------------------------------------------
# asset catalog
# ---------------------------------------------------------------------------

def synthetic_catalog() -> AssetCatalog:
    """Fixed catalog covering the categories emitted by the generators, with
    a spread of footprints and annotated facing directions."""
    entries = []
    spec = {
        "table": [(2.0, 1.0), (1.5, 1.5), (2.5, 1.25)],
        "chair": [(0.5, 0.5), (0.6, 0.5), (0.75, 0.75)],
        "bed": [(2.0, 1.6), (2.1, 1.8)],
        "nightstand": [(0.5, 0.5), (0.75, 0.5)],
        "stool": [(0.5, 0.5)],
        "desk": [(1.5, 0.75), (2.0, 1.0)],
        "bookshelf": [(1.0, 0.5), (2.0, 0.5)],
        "couch": [(2.25, 1.0)],
        "lamp": [(0.5, 0.5)],
        "armchair": [(1.0, 1.0)],
        "cabinet": [(1.0, 0.5)],
        "dresser": [(1.5, 0.5)],
        "shelf": [(1.0, 0.25)],
        "coffee_table": [(1.25, 0.75)],
    }
    fronts = {"chair": 0.0, "couch": 0.0, "bed": 180.0, "desk": 0.0}
    for category in sorted(spec):
        for i, dims in enumerate(spec[category]):
            entries.append(
                AssetEntry(
                    asset_id=f"{category}-{i:02d}",
                    category=category,
                    dims=dims,
                    front=fronts.get(category, 0.0),
                )
            )
    return AssetCatalog(entries)
