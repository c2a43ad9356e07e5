"""Deterministic executor of scene programs into layouts.

Direction encoding for all placement functions: 1 = +y (up), 2 = -y (down),
3 = -x (left), 4 = +x (right). Distances between objects are center-to-center.
New boxes are produced by translating the prototype's corners, so exact
inputs reproduce exactly.

Provenance: every emitted object records its role (primary objects are
initialized from global coordinates; dependent objects are placed relative
to an anchor object), the id of its dependency target, and the canonical
text of the call that instantiated it. A furniture object referenced exactly
once, as the reference argument of a single ``align`` / ``grid`` /
``grid_with_offset`` call, is consumed by that call: the call's first output
takes its place (and the primary role), and the remaining outputs depend on
that first output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .errors import DegenerateGeometryError, ExecError
from .geometry import Aabb, Wall

DIRECTIONS = {1: (0.0, 1.0), 2: (0.0, -1.0), 3: (-1.0, 0.0), 4: (1.0, 0.0)}

ROLE_PRIMARY = "primary"
ROLE_DEPENDENT = "dependent"

# stdlib calls that consume a single-use furniture reference
_CONSUMING = {"align", "grid", "grid_with_offset"}


@dataclass
class PlacedObject:
    id: int
    category: str
    box: Aabb
    role: str
    dependency_target: int | None
    instantiating_call: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "category": self.category,
            "box": self.box.as_list(),
            "role": self.role,
            "target": self.dependency_target,
            "call": self.instantiating_call,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlacedObject":
        return cls(
            id=int(d["id"]),
            category=d["category"],
            box=Aabb(*d["box"]),
            role=d["role"],
            dependency_target=None if d.get("target") is None else int(d["target"]),
            instantiating_call=d["call"],
        )


def _walls_to_json(walls: list[Wall]) -> list[dict]:
    return [{"p1": list(w.p1), "p2": list(w.p2)} for w in walls]


def _walls_from_json(items: list[dict]) -> list[Wall]:
    return [Wall(tuple(w["p1"]), tuple(w["p2"])) for w in items]


def perimeter_walls(bounds: Aabb) -> list[Wall]:
    c = [
        (bounds.x_min, bounds.y_min),
        (bounds.x_max, bounds.y_min),
        (bounds.x_max, bounds.y_max),
        (bounds.x_min, bounds.y_max),
    ]
    return [Wall(c[i], c[(i + 1) % 4]) for i in range(4)]


@dataclass
class Room:
    bounds: Aabb
    walls: list[Wall]

    @classmethod
    def from_bounds(cls, bounds: Aabb) -> "Room":
        return cls(bounds, perimeter_walls(bounds))

    def to_dict(self) -> dict:
        return {"room_bounds": self.bounds.as_list(), "walls": _walls_to_json(self.walls)}

    @classmethod
    def from_dict(cls, d: dict) -> "Room":
        bounds = Aabb(*d["room_bounds"])
        if d.get("walls"):
            return cls(bounds, _walls_from_json(d["walls"]))
        return cls.from_bounds(bounds)


@dataclass
class Layout:
    objects: list[PlacedObject]
    walls: list[Wall]
    room_bounds: Aabb

    @property
    def room(self) -> Room:
        return Room(self.room_bounds, self.walls)

    def boxes_array(self) -> np.ndarray:
        if not self.objects:
            return np.zeros((0, 4), dtype=np.float64)
        return np.array([o.box.as_list() for o in self.objects], dtype=np.float64)

    def object_by_id(self, oid: int) -> PlacedObject:
        for o in self.objects:
            if o.id == oid:
                return o
        raise KeyError(f"no object with id {oid}")

    def to_dict(self) -> dict:
        return {
            "room_bounds": self.room_bounds.as_list(),
            "walls": _walls_to_json(self.walls),
            "objects": [o.to_dict() for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Layout":
        return cls(
            objects=[PlacedObject.from_dict(o) for o in d.get("objects", [])],
            walls=_walls_from_json(d.get("walls", [])),
            room_bounds=Aabb(*d["room_bounds"]),
        )


# ---------------------------------------------------------------------------
# runtime values
# ---------------------------------------------------------------------------

class _Obj:
    """An object created during execution, pending emission."""

    __slots__ = ("box", "category", "role", "target", "call_text", "suppressed", "final_id")

    def __init__(self, box: Aabb, category: str, role: str, target: "_Obj | None", call_text: str):
        self.box = box
        self.category = category
        self.role = role
        self.target = target
        self.call_text = call_text
        self.suppressed = False
        self.final_id: int | None = None


def _require_number(value, what: str) -> float:
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ExecError(f"non-finite value for {what}: {value!r}")
        return value
    raise ExecError(f"{what} must be a number, got {type(value).__name__}")


def _require_whole(value, what: str) -> int:
    v = _require_number(value, what)
    r = round(v)
    if abs(v - r) > 1e-9:
        raise ExecError(f"{what} must be whole-valued, got {v!r}")
    return int(r)


def _require_obj(value, what: str) -> _Obj:
    if isinstance(value, _Obj):
        return value
    raise ExecError(f"{what} must be a furniture object, got {type(value).__name__}")


def _require_size(value, what: str) -> tuple[float, float]:
    if not isinstance(value, tuple) or len(value) != 2:
        raise ExecError(f"{what} must be a (width, height) tuple")
    w = _require_number(value[0], f"{what}[0]")
    h = _require_number(value[1], f"{what}[1]")
    if w <= 0.0 or h <= 0.0:
        raise ExecError(f"{what} must be positive, got {value!r}")
    return w, h


def _require_direction(value) -> tuple[float, float]:
    d = _require_whole(value, "direction")
    if d not in DIRECTIONS:
        raise ExecError(f"direction must be 1 (up), 2 (down), 3 (left) or 4 (right), got {d}")
    return DIRECTIONS[d]


def _box_from_center(cx: float, cy: float, w: float, h: float) -> Aabb:
    try:
        return Aabb.from_center(cx, cy, w, h)
    except DegenerateGeometryError as e:
        raise ExecError(str(e)) from e


class _Executor:
    def __init__(self, program: dsl.Program, library, room: Room):
        self.program = program
        self.library = library
        self.room = room
        self.emissions: list[_Obj] = []
        self.category_stack: list[str] = []
        self.call_text: str | None = None
        self.local_defs = {fd.name: fd for fd in program.defs}
        self.consumed_vars = self._consumption_analysis()

    # -- static analysis ----------------------------------------------------

    def _consumption_analysis(self) -> set[str]:
        """Variables bound by a top-level furniture call and referenced exactly
        once, as the reference argument of one align/grid/grid_with_offset call."""
        counts: dict[str, int] = {}
        first_arg_of: dict[str, str] = {}

        def walk(expr):
            if isinstance(expr, dsl.Var):
                counts[expr.name] = counts.get(expr.name, 0) + 1
            elif isinstance(expr, (dsl.TupleLit, dsl.ListLit)):
                for a in expr.items:
                    walk(a)
            elif isinstance(expr, dsl.Call):
                for a in expr.args:
                    walk(a)
            elif isinstance(expr, dsl.BinOp):
                walk(expr.left)
                walk(expr.right)

        furniture_vars = set()
        for stmt in self.program.statements:
            expr = stmt.value if isinstance(stmt, (dsl.Assign, dsl.ExprStmt)) else None
            if expr is None:
                continue
            if isinstance(stmt, dsl.Assign) and isinstance(expr, dsl.Call) and expr.callee == "furniture":
                furniture_vars.add(stmt.name)
            if (
                isinstance(expr, dsl.Call)
                and expr.callee in _CONSUMING
                and expr.args
                and isinstance(expr.args[0], dsl.Var)
            ):
                first_arg_of[expr.args[0].name] = expr.callee
            walk(expr)
        return {v for v in furniture_vars if counts.get(v, 0) == 1 and v in first_arg_of}

    # -- emission -----------------------------------------------------------

    def create(self, box: Aabb, role: str, target: _Obj | None, anchor: _Obj | None, call_text: str) -> _Obj:
        if self.category_stack:
            category = self.category_stack[-1]
        elif anchor is not None:
            category = anchor.category
        else:
            category = "object"
        obj = _Obj(box, category, role, target, self.call_text or call_text)
        self.emissions.append(obj)
        return obj

    # -- expression evaluation ----------------------------------------------

    def eval_expr(self, expr, env: list[dict]):
        if isinstance(expr, dsl.Number):
            return expr.value
        if isinstance(expr, dsl.Var):
            for scope in reversed(env):
                if expr.name in scope:
                    return scope[expr.name]
            raise ExecError(f"unresolved name {expr.name!r}")
        if isinstance(expr, dsl.TupleLit):
            return tuple(self.eval_expr(a, env) for a in expr.items)
        if isinstance(expr, dsl.ListLit):
            return [self.eval_expr(a, env) for a in expr.items]
        if isinstance(expr, dsl.BinOp):
            return self.eval_binop(expr, env)
        if isinstance(expr, dsl.Call):
            return self.eval_call(expr, env)
        raise ExecError(f"cannot evaluate {type(expr).__name__}")

    def eval_binop(self, expr: dsl.BinOp, env):
        left = self.eval_expr(expr.left, env)
        right = self.eval_expr(expr.right, env)
        if expr.op == "+" and isinstance(left, list) and isinstance(right, list):
            return left + right
        a = _require_number(left, "operand")
        b = _require_number(right, "operand")
        try:
            if expr.op == "+":
                v = a + b
            elif expr.op == "-":
                v = a - b
            elif expr.op == "*":
                v = a * b
            else:
                v = a / b
        except ZeroDivisionError as e:
            raise ExecError("division by zero") from e
        if not math.isfinite(v):
            raise ExecError(f"non-finite arithmetic result: {a!r} {expr.op} {b!r}")
        return v

    def eval_call(self, expr: dsl.Call, env):
        args = [self.eval_expr(a, env) for a in expr.args]
        name = expr.callee

        if name == "furniture":
            return self.call_furniture(expr, args)

        fd = self.local_defs.get(name)
        if fd is None and self.library is not None:
            fd = self.library.lookup(name)
        if fd is None:
            raise ExecError(f"unresolved function {name!r} (not in library)")
        if fd.native:
            return self.call_native(name, expr, args)
        return self.call_funcdef(fd, expr, args)

    def call_text_of(self, expr: dsl.Call) -> str:
        return dsl.format_expr(expr)

    def call_furniture(self, expr: dsl.Call, args):
        if len(args) != 4:
            raise ExecError(f"furniture takes 4 arguments, got {len(args)}")
        coords = [_require_number(a, "furniture coordinate") for a in args]
        try:
            box = Aabb(*coords)
        except DegenerateGeometryError as e:
            raise ExecError(str(e)) from e
        return self.create(box, ROLE_PRIMARY, None, None, self.call_text_of(expr))

    def call_native(self, name: str, expr: dsl.Call, args):
        consumed = (
            name in _CONSUMING
            and expr.args
            and isinstance(expr.args[0], dsl.Var)
            and expr.args[0].name in self.consumed_vars
        )
        handler = {
            "parallel": self.native_parallel,
            "align": self.native_align,
            "grid": self.native_grid,
            "grid_with_offset": self.native_grid_with_offset,
            "symmetrical": self.native_symmetrical,
            "cluster_placement": self.native_cluster_placement,
        }.get(name)
        if handler is None:
            raise ExecError(f"function {name!r} has no native implementation")
        if name in _CONSUMING:
            return handler(expr, args, consumed)
        return handler(expr, args)

    def call_funcdef(self, fd: dsl.FuncDef, expr: dsl.Call, args):
        if len(args) != len(fd.params):
            raise ExecError(f"{fd.name} takes {len(fd.params)} arguments, got {len(args)}")
        outer_text = self.call_text
        if self.call_text is None:
            self.call_text = self.call_text_of(expr)
        env = [dict(zip(fd.params, args))]
        result: list = []
        try:
            for stmt in fd.body:
                if isinstance(stmt, dsl.Return):
                    value = self.eval_expr(stmt.value, env)
                    if not isinstance(value, list):
                        raise ExecError(f"{fd.name} must return a list")
                    result = value
                    break
                self.exec_stmt(stmt, env)
        finally:
            self.call_text = outer_text
        return result

    # -- native stdlib --------------------------------------------------------

    def _emit_translated(self, expr, anchor: _Obj, dx: float, dy: float, size, consumed_first: bool, index: int, first_obj):
        """Emit one pattern member; the prototype box is either the anchor's
        (translate exactly) or rebuilt around the displaced center."""
        text = self.call_text_of(expr)
        if size is None:
            box = anchor.box.translated(dx, dy)
        else:
            w, h = size
            cx, cy = anchor.box.center
            box = _box_from_center(cx + dx, cy + dy, w, h)
        if consumed_first:
            if index == 0:
                return self.create(box, ROLE_PRIMARY, None, anchor, text)
            return self.create(box, ROLE_DEPENDENT, first_obj, anchor, text)
        return self.create(box, ROLE_DEPENDENT, anchor, anchor, text)

    def native_parallel(self, expr, args):
        if not 3 <= len(args) <= 4:
            raise ExecError(f"parallel takes 3 or 4 arguments, got {len(args)}")
        anchor = _require_obj(args[0], "parallel anchor")
        distance = _require_number(args[1], "distance_apart")
        if distance < 0.0:
            raise ExecError(f"distance_apart must be >= 0, got {distance!r}")
        ux, uy = _require_direction(args[2])
        size = _require_size(args[3], "parallel_object_size") if len(args) == 4 else None
        return self._emit_translated(expr, anchor, distance * ux, distance * uy, size, False, 0, None)

    def native_align(self, expr, args, consumed: bool):
        if len(args) != 4:
            raise ExecError(f"align takes 4 arguments, got {len(args)}")
        ref = _require_obj(args[0], "align reference")
        count = _require_whole(args[1], "count")
        if count < 1:
            raise ExecError(f"count must be >= 1, got {count}")
        distance = _require_number(args[2], "distance")
        ux, uy = _require_direction(args[3])
        if consumed:
            ref.suppressed = True
        out = []
        first = None
        for i in range(count):
            obj = self._emit_translated(
                expr, ref, i * distance * ux, i * distance * uy, None, consumed, i, first
            )
            if i == 0:
                first = obj
            out.append(obj)
        return out

    def _grid_cells(self, rows: int, cols: int, h: float, v: float):
        for r in range(rows):
            for c in range(cols):
                dx = (c - (cols - 1) / 2.0) * h
                dy = ((rows - 1) / 2.0 - r) * v
                yield r, c, dx, dy

    def native_grid(self, expr, args, consumed: bool):
        if len(args) != 5:
            raise ExecError(f"grid takes 5 arguments, got {len(args)}")
        ref = _require_obj(args[0], "grid reference")
        rows = _require_whole(args[1], "rows")
        cols = _require_whole(args[2], "cols")
        if rows < 1 or cols < 1:
            raise ExecError(f"rows and cols must be >= 1, got {rows}x{cols}")
        h = _require_number(args[3], "h_distance")
        v = _require_number(args[4], "v_distance")
        if consumed:
            ref.suppressed = True
        out = []
        first = None
        for idx, (_, _, dx, dy) in enumerate(self._grid_cells(rows, cols, h, v)):
            obj = self._emit_translated(expr, ref, dx, dy, None, consumed, idx, first)
            if idx == 0:
                first = obj
            out.append(obj)
        return out

    def native_grid_with_offset(self, expr, args, consumed: bool):
        if not 5 <= len(args) <= 7:
            raise ExecError(f"grid_with_offset takes 5 to 7 arguments, got {len(args)}")
        ref = _require_obj(args[0], "grid reference")
        rows = _require_whole(args[1], "rows")
        cols = _require_whole(args[2], "cols")
        if rows < 1 or cols < 1:
            raise ExecError(f"rows and cols must be >= 1, got {rows}x{cols}")
        h = _require_number(args[3], "h_distance")
        v = _require_number(args[4], "v_distance")

        def offsets(arg, n, what):
            if arg is None:
                return [0.0] * n
            if not isinstance(arg, list):
                raise ExecError(f"{what} must be a list")
            if len(arg) != n:
                raise ExecError(f"{what} must have length {n}, got {len(arg)}")
            return [_require_number(a, what) for a in arg]

        row_offsets = offsets(args[5] if len(args) > 5 else None, rows, "row_offsets")
        col_offsets = offsets(args[6] if len(args) > 6 else None, cols, "col_offsets")
        if consumed:
            ref.suppressed = True
        out = []
        first = None
        for idx, (r, c, dx, dy) in enumerate(self._grid_cells(rows, cols, h, v)):
            obj = self._emit_translated(
                expr, ref, dx + row_offsets[r], dy + col_offsets[c], None, consumed, idx, first
            )
            if idx == 0:
                first = obj
            out.append(obj)
        return out

    def native_symmetrical(self, expr, args):
        if len(args) != 4:
            raise ExecError(f"symmetrical takes 4 arguments, got {len(args)}")
        center = args[0]
        if not isinstance(center, tuple) or len(center) != 2:
            raise ExecError("symmetrical center must be an (x, y) tuple")
        cx = _require_number(center[0], "center x")
        cy = _require_number(center[1], "center y")
        dx = _require_number(args[1], "distance_x")
        dy = _require_number(args[2], "distance_y")
        w, h = _require_size(args[3], "symmetrical_objects_size")
        text = self.call_text_of(expr)
        out = []
        for sx, sy in ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)):
            box = _box_from_center(cx + sx * dx, cy + sy * dy, w, h)
            out.append(self.create(box, ROLE_PRIMARY, None, None, text))
        return out

    def native_cluster_placement(self, expr, args):
        if not 2 <= len(args) <= 3:
            raise ExecError(f"cluster_placement takes 2 or 3 arguments, got {len(args)}")
        anchor = _require_obj(args[0], "cluster anchor")
        offsets = args[1]
        if not isinstance(offsets, list) or not offsets:
            raise ExecError("offsets must be a non-empty list of (dx, dy) tuples")
        size = _require_size(args[2], "clustered_objects_size") if len(args) == 3 else None
        out = []
        for off in offsets:
            if not isinstance(off, tuple) or len(off) != 2:
                raise ExecError("each offset must be a (dx, dy) tuple")
            ox = _require_number(off[0], "offset x")
            oy = _require_number(off[1], "offset y")
            out.append(self._emit_translated(expr, anchor, ox, oy, size, False, 0, None))
        return out

    # -- statements -----------------------------------------------------------

    def exec_stmt(self, stmt, env: list[dict]):
        if isinstance(stmt, dsl.Assign):
            self.category_stack.append(dsl.category_of(stmt.name))
            try:
                value = self.eval_expr(stmt.value, env)
            finally:
                self.category_stack.pop()
            for scope in reversed(env[:-1]):
                if stmt.name in scope:
                    scope[stmt.name] = value
                    return
            env[-1][stmt.name] = value
        elif isinstance(stmt, dsl.ExprStmt):
            self.eval_expr(stmt.value, env)
        elif isinstance(stmt, dsl.RangeFor):
            start = _require_whole(self.eval_expr(stmt.start, env), "loop bound")
            stop = _require_whole(self.eval_expr(stmt.stop, env), "loop bound")
            for i in range(start, stop):
                env.append({stmt.var: float(i)})
                try:
                    for inner in stmt.body:
                        self.exec_stmt(inner, env)
                finally:
                    env.pop()
        else:
            raise ExecError(f"cannot execute {type(stmt).__name__} here")

    def run(self) -> tuple[Layout, list[list[_Obj]]]:
        env: list[dict] = [{}]
        spans = []
        for stmt in self.program.statements:
            begin = len(self.emissions)
            self.exec_stmt(stmt, env)
            spans.append((begin, len(self.emissions)))

        objects = []
        for obj in self.emissions:
            if obj.suppressed:
                continue
            obj.final_id = len(objects)
            target = None
            if obj.target is not None and not obj.target.suppressed:
                target = obj.target.final_id
                if target is None:
                    raise ExecError("dependency target emitted after its dependent")
            role = obj.role if target is not None or obj.role == ROLE_PRIMARY else ROLE_PRIMARY
            objects.append(
                PlacedObject(obj.final_id, obj.category, obj.box, role, target, obj.call_text)
            )
        layout = Layout(objects, list(self.room.walls), self.room.bounds)
        stmt_emissions = [[self.emissions[i] for i in range(b, e)] for b, e in spans]
        return layout, stmt_emissions


def execute(program: dsl.Program, library, room: Room) -> Layout:
    """Execute a program against a library and room; pure and deterministic."""
    layout, _ = _Executor(program, library, room).run()
    return layout


def execute_traced(program: dsl.Program, library, room: Room):
    """Like execute, additionally returning, per top-level statement, the
    objects it created (suppressed ones included, flagged)."""
    return _Executor(program, library, room).run()
