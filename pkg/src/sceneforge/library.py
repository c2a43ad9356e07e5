"""Function library, description-length accounting and corpus rewriting.

The library holds the placement functions a program may call: built-in
(native) entries identified by name, plus learned function definitions.
The bootstrap library contains exactly ``furniture`` and ``parallel``;
the full built-in set adds the five pattern functions.

Compression scoring is MDL-style: programs are measured in canonical-form
tokens, a candidate abstraction is charged its definition cost once, and
``rewrite_corpus`` greedily replaces maximal statement groups whose executed
boxes exactly match an instantiation of the candidate (tolerance 1e-6 m;
near misses are never abstracted). Rewrites are verified by re-execution;
a program whose rewrite fails verification is left untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsl, interp
from .dsl import Call, FuncDef, Number, Program, TupleLit, Var
from .errors import ExecError, SceneForgeError
from .geometry import Aabb

STDLIB_SIGNATURES = {
    "furniture": ("x_min", "y_min", "x_max", "y_max"),
    "parallel": ("obj_anchor", "distance_apart", "direction", "parallel_object_size"),
    "align": ("obj_ref", "count", "distance", "direction"),
    "grid": ("obj_ref", "rows", "cols", "h_distance", "v_distance"),
    "grid_with_offset": (
        "obj_ref",
        "rows",
        "cols",
        "h_distance",
        "v_distance",
        "row_offsets",
        "col_offsets",
    ),
    "symmetrical": ("center", "distance_x", "distance_y", "symmetrical_objects_size"),
    "cluster_placement": ("obj_center", "offsets", "clustered_objects_size"),
}

BOOTSTRAP_NAMES = ("furniture", "parallel")

_MATCH_TOL = 1e-6
_MAX_WINDOW = 64

_REWRITE_ROOM = interp.Room.from_bounds(Aabb(-1000.0, -1000.0, 1000.0, 1000.0))


def stdlib_def(name: str) -> FuncDef:
    """Native signature entry for a built-in placement function."""
    if name not in STDLIB_SIGNATURES:
        raise SceneForgeError(f"unknown stdlib function {name!r}")
    return FuncDef(name, STDLIB_SIGNATURES[name], (), native=True)


@dataclass(frozen=True)
class Library:
    """Ordered set of callable functions; copy-on-write, versioned."""

    functions: tuple = ()
    version: int = 0

    def __post_init__(self):
        names = [f.name for f in self.functions]
        if len(set(names)) != len(names):
            raise SceneForgeError(f"duplicate function names in library: {names}")
        for f in self.functions:
            if not f.native and f.name in STDLIB_SIGNATURES:
                raise SceneForgeError(f"stdlib name {f.name!r} is reserved")

    @classmethod
    def bootstrap(cls) -> "Library":
        return cls(tuple(stdlib_def(n) for n in BOOTSTRAP_NAMES), version=0)

    @classmethod
    def standard(cls) -> "Library":
        return cls(tuple(stdlib_def(n) for n in STDLIB_SIGNATURES), version=0)

    def names(self) -> tuple:
        return tuple(f.name for f in self.functions)

    def has(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def lookup(self, name: str):
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def learned(self) -> tuple:
        return tuple(f for f in self.functions if not f.native)

    def stdlib_names(self) -> tuple:
        return tuple(f.name for f in self.functions if f.native)

    def with_function(self, fd: FuncDef) -> "Library":
        if self.has(fd.name):
            raise SceneForgeError(f"library already defines {fd.name!r}")
        if not fd.native:
            dsl.validate_def(fd)
        return Library(self.functions + (fd,), self.version + 1)

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"# scenelib v{self.version}"]
        natives = self.stdlib_names()
        if natives:
            lines.append("# stdlib: " + ", ".join(natives))
        for fd in self.learned():
            lines.append(dsl.format_def(fd))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Library":
        version = 0
        natives: list[str] = []
        body_lines = []
        for line in text.splitlines():
            stripped = line.strip()
            if stripped.startswith("# scenelib v"):
                version = int(stripped.removeprefix("# scenelib v"))
            elif stripped.startswith("# stdlib:"):
                natives = [n.strip() for n in stripped.removeprefix("# stdlib:").split(",") if n.strip()]
            else:
                body_lines.append(line)
        program = dsl.parse("\n".join(body_lines))
        if program.statements:
            raise SceneForgeError("library files may only contain function definitions")
        functions = tuple(stdlib_def(n) for n in natives) + program.defs
        return cls(functions, version)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path) -> "Library":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_text(fh.read())


# ---------------------------------------------------------------------------
# description length
# ---------------------------------------------------------------------------

def description_length(program: Program) -> int:
    """AST token count of the canonical form (closing brackets are free)."""
    return dsl.count_tokens(dsl.format_program(program))


def definition_cost(fd: FuncDef) -> int:
    if fd.native:
        return dsl.count_tokens(f"def {fd.name}({', '.join(fd.params)}) {{")
    return dsl.count_tokens(dsl.format_def(fd))


def _count_calls(expr) -> int:
    if isinstance(expr, Call):
        n = 0 if expr.callee == "furniture" else 1
        return n + sum(_count_calls(a) for a in expr.args)
    if isinstance(expr, (dsl.TupleLit, dsl.ListLit)):
        return sum(_count_calls(a) for a in expr.items)
    if isinstance(expr, dsl.BinOp):
        return _count_calls(expr.left) + _count_calls(expr.right)
    return 0


def funcs_per_program(corpus: list[Program]) -> float:
    """Mean number of high-level call sites per program (everything except
    ``furniture`` counts, learned and built-in alike)."""
    if not corpus:
        raise SceneForgeError("funcs_per_program requires a non-empty corpus")
    totals = [
        sum(_count_calls(s.value) for s in p.statements if isinstance(s, (dsl.Assign, dsl.ExprStmt)))
        for p in corpus
    ]
    return float(np.mean(totals))


@dataclass
class CompressionReport:
    candidate: FuncDef
    tokens_before: int
    tokens_after: int
    definition_cost: int
    programs_rewritten: int

    @property
    def gain(self) -> float:
        return self.tokens_before - self.tokens_after - self.definition_cost


def accept_candidate(report: CompressionReport, min_gain: float = 8.0) -> bool:
    """Admit a candidate only if it compresses by at least ``min_gain`` tokens
    and is reused across at least two programs."""
    return report.gain >= min_gain and report.programs_rewritten >= 2


# ---------------------------------------------------------------------------
# rewriting
# ---------------------------------------------------------------------------

def _num(value: float) -> Number:
    return Number(float(value))


@dataclass
class _StmtInfo:
    stmt: object
    objects: list  # non-suppressed interp._Obj created by the statement
    bound: str | None


def _program_info(program: Program, library: Library) -> list[_StmtInfo]:
    _, traces = interp.execute_traced(program, library, _REWRITE_ROOM)
    infos = []
    for stmt, objs in zip(program.statements, traces):
        bound = stmt.name if isinstance(stmt, dsl.Assign) else None
        infos.append(_StmtInfo(stmt, [o for o in objs if not o.suppressed], bound))
    return infos


def _references(program: Program) -> dict:
    """Map variable name -> set of statement indices that reference it."""
    refs: dict[str, set] = {}

    def walk(expr, idx):
        if isinstance(expr, Var):
            refs.setdefault(expr.name, set()).add(idx)
        elif isinstance(expr, (dsl.TupleLit, dsl.ListLit)):
            for a in expr.items:
                walk(a, idx)
        elif isinstance(expr, Call):
            for a in expr.args:
                walk(a, idx)
        elif isinstance(expr, dsl.BinOp):
            walk(expr.left, idx)
            walk(expr.right, idx)

    for i, stmt in enumerate(program.statements):
        if isinstance(stmt, (dsl.Assign, dsl.ExprStmt)):
            walk(stmt.value, i)
    return refs


class _NameAllocator:
    def __init__(self, used=()):
        self.used = set(used)

    @classmethod
    def for_program(cls, program: Program) -> "_NameAllocator":
        return cls(s.name for s in program.statements if isinstance(s, dsl.Assign))

    def fresh(self, category: str) -> str:
        i = 1
        while f"{category}_{i}" in self.used:
            i += 1
        name = f"{category}_{i}"
        self.used.add(name)
        return name


def _same_size(objs, tol=_MATCH_TOL) -> bool:
    w = objs[0].box.width
    h = objs[0].box.height
    return all(abs(o.box.width - w) <= tol and abs(o.box.height - h) <= tol for o in objs)


def _uniform_spacing(values, tol=_MATCH_TOL):
    """Common difference of a sorted sequence, or None."""
    if len(values) < 2:
        return None
    d = values[1] - values[0]
    for a, b in zip(values, values[1:]):
        if abs((b - a) - d) > tol:
            return None
    return d


def _cluster_values(values, tol=_MATCH_TOL):
    """Group near-identical floats; returns sorted representatives."""
    out = []
    for v in sorted(values):
        if not out or abs(v - out[-1][-1]) > tol:
            out.append([v])
        else:
            out[-1].append(v)
    return [group[0] for group in out]


# -- native pattern matchers (inverse of the interpreter's placements) -------

def _match_align(objs, names: _NameAllocator):
    if len(objs) < 3 or not _same_size(objs):
        return None
    cats = {o.category for o in objs}
    if len(cats) != 1:
        return None
    centers = [o.box.center for o in objs]
    xs = [c[0] for c in centers]
    ys = [c[1] for c in centers]
    if max(ys) - min(ys) <= _MATCH_TOL:
        order = sorted(range(len(objs)), key=lambda i: xs[i])
        spacing = _uniform_spacing([xs[i] for i in order])
        direction = 4
    elif max(xs) - min(xs) <= _MATCH_TOL:
        order = sorted(range(len(objs)), key=lambda i: ys[i])
        spacing = _uniform_spacing([ys[i] for i in order])
        direction = 1
    else:
        return None
    if spacing is None or spacing <= _MATCH_TOL:
        return None
    category = objs[0].category
    first = objs[order[0]].box
    ref = names.fresh(category)
    out = names.fresh(category)
    return [
        dsl.Assign(ref, Call("furniture", (_num(first.x_min), _num(first.y_min), _num(first.x_max), _num(first.y_max)))),
        dsl.Assign(out, Call("align", (Var(ref), _num(len(objs)), _num(spacing), _num(direction)))),
    ]


def _lattice(objs):
    """Row-major description of a full rectangular lattice, or None.

    Returns (rows, cols, h, v, top_left_box) with row 0 at max y.
    """
    if len(objs) < 4 or not _same_size(objs):
        return None
    centers = [o.box.center for o in objs]
    xs = _cluster_values([c[0] for c in centers])
    ys = _cluster_values([c[1] for c in centers])
    rows, cols = len(ys), len(xs)
    if rows < 2 or cols < 2 or rows * cols != len(objs):
        return None
    h = _uniform_spacing(xs)
    v = _uniform_spacing(ys)
    if h is None or v is None or h <= _MATCH_TOL or v <= _MATCH_TOL:
        return None
    occupied = set()
    top_left = None
    ys_desc = list(reversed(ys))
    for o in objs:
        cx, cy = o.box.center
        ci = min(range(cols), key=lambda i: abs(xs[i] - cx))
        ri = min(range(rows), key=lambda i: abs(ys_desc[i] - cy))
        if abs(xs[ci] - cx) > _MATCH_TOL or abs(ys_desc[ri] - cy) > _MATCH_TOL:
            return None
        if (ri, ci) in occupied:
            return None
        occupied.add((ri, ci))
        if (ri, ci) == (0, 0):
            top_left = o.box
    if len(occupied) != rows * cols or top_left is None:
        return None
    return rows, cols, h, v, top_left


def _match_grid(objs, names: _NameAllocator):
    if len({o.category for o in objs}) != 1:
        return None
    fit = _lattice(objs)
    if fit is None:
        return None
    rows, cols, h, v, top_left = fit
    # reference box sits at the lattice center; the first grid cell is the
    # top-left one, displaced by (-(cols-1)/2*h, +(rows-1)/2*v) from it
    ref_box = top_left.translated((cols - 1) / 2.0 * h, -(rows - 1) / 2.0 * v)
    category = objs[0].category
    ref = names.fresh(category)
    out = names.fresh(category)
    return [
        dsl.Assign(ref, Call("furniture", tuple(_num(c) for c in ref_box.as_list()))),
        dsl.Assign(out, Call("grid", (Var(ref), _num(rows), _num(cols), _num(h), _num(v)))),
    ]


def _match_grid_with_offset(objs, names: _NameAllocator):
    if len(objs) < 4 or not _same_size(objs) or len({o.category for o in objs}) != 1:
        return None
    centers = [o.box.center for o in objs]

    def try_axis(primary, secondary, row_mode: bool):
        lanes = _cluster_values(primary)
        n_lanes = len(lanes)
        if n_lanes < 2 or len(objs) % n_lanes != 0:
            return None
        per = len(objs) // n_lanes
        if per < 2:
            return None
        lane_v = _uniform_spacing(lanes)
        if lane_v is None or lane_v <= _MATCH_TOL:
            return None
        groups: dict[int, list] = {i: [] for i in range(n_lanes)}
        for idx, p in enumerate(primary):
            li = min(range(n_lanes), key=lambda i: abs(lanes[i] - p))
            if abs(lanes[li] - p) > _MATCH_TOL:
                return None
            groups[li].append(idx)
        spacing = None
        origins = []
        for li in range(n_lanes):
            if len(groups[li]) != per:
                return None
            vals = sorted(secondary[i] for i in groups[li])
            s = _uniform_spacing(vals)
            if s is None or s <= _MATCH_TOL:
                return None
            if spacing is None:
                spacing = s
            elif abs(s - spacing) > _MATCH_TOL:
                return None
            origins.append(vals[0])
        offsets = [o - origins[0] for o in origins]
        if all(abs(o) <= _MATCH_TOL for o in offsets):
            return None  # plain grid; handled by the grid matcher
        # lanes sorted ascending; row 0 of the executed grid is the max-y row
        if row_mode:
            lane_order = list(reversed(range(n_lanes)))
            rows, cols, h, v = n_lanes, per, spacing, lane_v
        else:
            lane_order = list(range(n_lanes))
            rows, cols, h, v = per, n_lanes, lane_v, spacing
        ordered_offsets = [offsets[i] for i in lane_order]
        first_lane = lane_order[0]
        if row_mode:
            # cell (0, 0) is the min-x member of the top row
            first_idx = min(groups[first_lane], key=lambda i: secondary[i])
        else:
            # cell (0, 0) is the max-y member of the leftmost column
            first_idx = max(groups[first_lane], key=lambda i: secondary[i])
        first_box = objs[first_idx].box
        category = objs[0].category
        ref = names.fresh(category)
        out = names.fresh(category)
        if row_mode:
            ref_box = first_box.translated(
                (cols - 1) / 2.0 * h - ordered_offsets[0], -(rows - 1) / 2.0 * v
            )
            off_args = (dsl.ListLit(tuple(_num(o) for o in ordered_offsets)),)
        else:
            ref_box = first_box.translated(
                (cols - 1) / 2.0 * h, -(rows - 1) / 2.0 * v - ordered_offsets[0]
            )
            zeros = dsl.ListLit(tuple(_num(0.0) for _ in range(rows)))
            off_args = (zeros, dsl.ListLit(tuple(_num(o) for o in ordered_offsets)))
        call = Call(
            "grid_with_offset",
            (Var(ref), _num(rows), _num(cols), _num(h), _num(v)) + off_args,
        )
        return [
            dsl.Assign(ref, Call("furniture", tuple(_num(c) for c in ref_box.as_list()))),
            dsl.Assign(out, call),
        ]

    xs = [c[0] for c in centers]
    ys = [c[1] for c in centers]
    return try_axis(ys, xs, True) or try_axis(xs, ys, False)


def _match_symmetrical(objs, names: _NameAllocator):
    if len(objs) != 4 or not _same_size(objs) or len({o.category for o in objs}) != 1:
        return None
    centers = [o.box.center for o in objs]
    xs = _cluster_values([c[0] for c in centers])
    ys = _cluster_values([c[1] for c in centers])
    if len(xs) != 2 or len(ys) != 2:
        return None
    need = {(x, y) for x in (0, 1) for y in (0, 1)}
    for cx, cy in centers:
        key = (0 if abs(cx - xs[0]) <= _MATCH_TOL else 1, 0 if abs(cy - ys[0]) <= _MATCH_TOL else 1)
        need.discard(key)
    if need:
        return None
    dx = (xs[1] - xs[0]) / 2.0
    dy = (ys[1] - ys[0]) / 2.0
    if dx <= _MATCH_TOL or dy <= _MATCH_TOL:
        return None
    cx = (xs[0] + xs[1]) / 2.0
    cy = (ys[0] + ys[1]) / 2.0
    box = objs[0].box
    out = names.fresh(objs[0].category)
    call = Call(
        "symmetrical",
        (
            TupleLit((_num(cx), _num(cy))),
            _num(dx),
            _num(dy),
            TupleLit((_num(box.width), _num(box.height))),
        ),
    )
    return [dsl.Assign(out, call)]


def _match_cluster_placement(objs, names: _NameAllocator):
    if len(objs) < 3:
        return None
    anchor, members = objs[0], objs[1:]
    if not _same_size(members) or len({m.category for m in members}) != 1:
        return None
    if members[0].category == anchor.category:
        return None
    if anchor.box.area <= members[0].box.area + _MATCH_TOL:
        return None
    acx, acy = anchor.box.center
    args = [
        dsl.ListLit(
            tuple(
                TupleLit((_num(m.box.center[0] - acx), _num(m.box.center[1] - acy)))
                for m in members
            )
        )
    ]
    same_size = (
        abs(members[0].box.width - anchor.box.width) <= _MATCH_TOL
        and abs(members[0].box.height - anchor.box.height) <= _MATCH_TOL
    )
    if not same_size:
        args.append(TupleLit((_num(members[0].box.width), _num(members[0].box.height))))
    a_name = names.fresh(anchor.category)
    m_name = names.fresh(members[0].category)
    return [
        dsl.Assign(a_name, Call("furniture", tuple(_num(c) for c in anchor.box.as_list()))),
        dsl.Assign(m_name, Call("cluster_placement", (Var(a_name), *args))),
    ]


_NATIVE_MATCHERS = {
    "align": _match_align,
    "grid": _match_grid,
    "grid_with_offset": _match_grid_with_offset,
    "symmetrical": _match_symmetrical,
    "cluster_placement": _match_cluster_placement,
}


# -- learned candidates: affine inversion of the body's placement arithmetic -

class _AffineTemplate:
    """Emitted box coordinates of a straight-line candidate body are affine
    in its numeric parameters; recover the map by probing, then invert it
    per window with a least-squares solve."""

    def __init__(self, candidate: FuncDef, library: Library):
        self.candidate = candidate
        self.ok = False
        exec_lib = library if library.has(candidate.name) else library.with_function(candidate)
        base_err = None
        for base_value in (1.0, 2.0, 0.5):
            try:
                base = np.full(len(candidate.params), base_value)
                y0, cats = self._probe(exec_lib, base)
                h = 0.5
                cols = []
                for i in range(len(candidate.params)):
                    p = base.copy()
                    p[i] += h
                    yi, ci = self._probe(exec_lib, p)
                    if len(yi) != len(y0) or ci != cats:
                        raise ExecError("emission shape varies with parameters")
                    cols.append((yi - y0) / h)
                matrix = np.stack(cols, axis=1) if cols else np.zeros((len(y0), 0))
                intercept = y0 - matrix @ base
                check = base + np.linspace(0.25, 0.75, len(base)) if len(base) else base
                yc, cc = self._probe(exec_lib, check)
                if cc != cats or np.abs(matrix @ check + intercept - yc).max() > 1e-7:
                    raise ExecError("candidate body is not affine in its parameters")
                self.matrix = matrix
                self.intercept = intercept
                self.categories = cats
                self.ok = True
                return
            except (ExecError, SceneForgeError) as e:
                base_err = e
        raise ExecError(f"candidate {candidate.name!r} body fails to execute: {base_err}")

    def _probe(self, exec_lib: Library, params: np.ndarray):
        call = Call(self.candidate.name, tuple(_num(v) for v in params))
        program = Program((dsl.Assign("probe_1", call),))
        layout = interp.execute(program, exec_lib, _REWRITE_ROOM)
        coords = np.array([o.box.as_list() for o in layout.objects], dtype=np.float64).reshape(-1)
        return coords, tuple(o.category for o in layout.objects)

    def match(self, objs, names: _NameAllocator):
        if tuple(o.category for o in objs) != self.categories:
            return None
        y = np.array([o.box.as_list() for o in objs], dtype=np.float64).reshape(-1)
        if self.matrix.shape[1] == 0:
            params = np.zeros(0)
            residual = np.abs(self.intercept - y).max() if len(y) else 0.0
        else:
            params, *_ = np.linalg.lstsq(self.matrix, y - self.intercept, rcond=None)
            residual = np.abs(self.matrix @ params + self.intercept - y).max()
        if residual > _MATCH_TOL:
            return None
        out = names.fresh(objs[0].category)
        return [dsl.Assign(out, Call(self.candidate.name, tuple(_num(v) for v in params)))]


# -- driver -------------------------------------------------------------------

def _boxes_by_category(layout: interp.Layout) -> dict:
    out: dict[str, list] = {}
    for o in layout.objects:
        out.setdefault(o.category, []).append(o.box.as_list())
    for boxes in out.values():
        boxes.sort()
    return out


def _layouts_equivalent(a: interp.Layout, b: interp.Layout, tol=_MATCH_TOL) -> bool:
    ba, bb = _boxes_by_category(a), _boxes_by_category(b)
    if set(ba) != set(bb):
        return False
    for cat in ba:
        if len(ba[cat]) != len(bb[cat]):
            return False
        for pa, pb in zip(ba[cat], bb[cat]):
            if any(abs(x - y) > tol for x, y in zip(pa, pb)):
                return False
    return True


def _rewrite_program(program: Program, matcher, library: Library, exec_lib: Library):
    """Greedy left-to-right, maximal-window rewrite of one program."""
    try:
        infos = _program_info(program, library)
    except ExecError:
        return program, False
    refs = _references(program)
    names = _NameAllocator.for_program(program)
    n = len(infos)
    new_statements: list = []
    changed = False
    i = 0
    while i < n:
        if not infos[i].objects:
            new_statements.append(infos[i].stmt)
            i += 1
            continue
        matched = None
        j_max = min(n, i + _MAX_WINDOW)
        for j in range(j_max, i, -1):
            window = infos[i:j]
            if any(not w.objects for w in window):
                continue
            bound = {w.bound for w in window if w.bound}
            if any(k < i or k >= j for name in bound for k in refs.get(name, ())):
                continue
            objs = [o for w in window for o in w.objects]
            if len(objs) < 2:
                continue
            replacement = matcher(objs, names)
            if replacement is not None:
                matched = (j, replacement)
                break
        if matched is None:
            new_statements.append(infos[i].stmt)
            i += 1
        else:
            j, replacement = matched
            new_statements.extend(replacement)
            changed = True
            i = j
    if not changed:
        return program, False
    rewritten = Program(tuple(new_statements), program.defs)
    original_layout = interp.execute(program, library, _REWRITE_ROOM)
    try:
        new_layout = interp.execute(rewritten, exec_lib, _REWRITE_ROOM)
    except ExecError:
        return program, False
    if not _layouts_equivalent(original_layout, new_layout):
        return program, False
    return rewritten, True


def rewrite_corpus(
    corpus: list[Program],
    candidate: FuncDef,
    library: Library | None = None,
) -> tuple[list[Program], CompressionReport]:
    """Rewrite every program in the corpus with the candidate abstraction.

    Semantics are preserved: each rewritten program re-executes to the same
    per-category box multiset (1e-6 m) as its original, or is left unchanged.
    """
    if library is None:
        library = Library.standard()
    exec_lib = library if library.has(candidate.name) else library.with_function(candidate)

    if candidate.native:
        if candidate.name not in _NATIVE_MATCHERS:
            raise SceneForgeError(f"no rewrite rule for native candidate {candidate.name!r}")
        matcher = _NATIVE_MATCHERS[candidate.name]
    else:
        template = _AffineTemplate(candidate, library)
        matcher = template.match

    new_corpus = []
    tokens_before = 0
    tokens_after = 0
    rewritten_count = 0
    for program in corpus:
        tokens_before += description_length(program)
        new_program, changed = _rewrite_program(program, matcher, library, exec_lib)
        tokens_after += description_length(new_program)
        rewritten_count += int(changed)
        new_corpus.append(new_program)
    report = CompressionReport(
        candidate=candidate,
        tokens_before=tokens_before,
        tokens_after=tokens_after,
        definition_cost=definition_cost(candidate),
        programs_rewritten=rewritten_count,
    )
    return new_corpus, report
