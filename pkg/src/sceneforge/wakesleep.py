"""Wake-sleep orchestration: layout-to-program recognition, mIoU-gated
acceptance, abstraction proposal and iteration bookkeeping.

The built-in recognizer mines geometric patterns deterministically, so the
full loop runs offline; a remote proposal model (reached over HTTP, see
``HttpProposalClient``) is a drop-in upgrade for both the recognition and
the abstraction-proposal stages.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _kernels, dsl, interp
from .errors import ExecError, ProposalUnavailableError, SceneForgeError
from .geometry import Aabb
from .interp import Layout, Room
from .library import (
    STDLIB_SIGNATURES,
    CompressionReport,
    Library,
    _layouts_equivalent,
    _match_align,
    _match_cluster_placement,
    _match_grid,
    _match_grid_with_offset,
    _match_symmetrical,
    _NameAllocator,
    accept_candidate,
    description_length,
    funcs_per_program,
    rewrite_corpus,
    stdlib_def,
)

ACCEPT_THRESHOLD = 0.95

_TOL = 1e-6


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

def verify(target: Layout, predicted: Layout) -> float:
    """Reconstruction mIoU: per category, optimal one-to-one assignment of
    boxes maximizing summed IoU; unmatched objects contribute 0; the total is
    divided by max(|target|, |predicted|). Two empty layouts score 1."""
    nt, npred = len(target.objects), len(predicted.objects)
    if nt == 0 and npred == 0:
        return 1.0
    if nt == 0 or npred == 0:
        return 0.0
    total = 0.0
    t_by_cat: dict[str, list] = {}
    p_by_cat: dict[str, list] = {}
    for o in target.objects:
        t_by_cat.setdefault(o.category, []).append(o.box.as_list())
    for o in predicted.objects:
        p_by_cat.setdefault(o.category, []).append(o.box.as_list())
    for cat, t_boxes in t_by_cat.items():
        p_boxes = p_by_cat.get(cat)
        if not p_boxes:
            continue
        m = np.asarray(
            _kernels.iou_matrix(
                np.array(t_boxes, dtype=np.float64), np.array(p_boxes, dtype=np.float64)
            )
        )
        rows, cols = linear_sum_assignment(-m)
        total += float(m[rows, cols].sum())
    return total / max(nt, npred)


# ---------------------------------------------------------------------------
# deterministic heuristic recognizer
# ---------------------------------------------------------------------------

def _group_key(obj) -> tuple:
    return (obj.category, round(obj.box.width, 6), round(obj.box.height, 6))


def _mine_grids(remaining, lib: Library, names, statements):
    has_grid = lib.has("grid")
    has_gwo = lib.has("grid_with_offset")
    if not (has_grid or has_gwo):
        return
    groups: dict[tuple, list] = {}
    for o in remaining:
        groups.setdefault(_group_key(o), []).append(o)
    for key in sorted(groups):
        objs = groups[key]
        if len(objs) < 4:
            continue
        stmts = _match_grid(objs, names) if has_grid else None
        if stmts is None and has_gwo:
            stmts = _match_grid_with_offset(objs, names)
        if stmts is not None:
            statements.extend(stmts)
            for o in objs:
                remaining.remove(o)


def _arith_runs(values_idx, tol=_TOL):
    """Maximal equal-spacing runs (length >= 3) over (value, item) pairs."""
    runs = []
    i = 0
    n = len(values_idx)
    while i + 2 < n:
        d = values_idx[i + 1][0] - values_idx[i][0]
        j = i + 1
        while j + 1 < n and abs((values_idx[j + 1][0] - values_idx[j][0]) - d) <= tol:
            j += 1
        if j - i >= 2 and d > tol:
            runs.append([item for _, item in values_idx[i : j + 1]])
            i = j + 1
        else:
            i += 1
    return runs


def _mine_rows(remaining, lib: Library, names, statements):
    if not lib.has("align"):
        return
    groups: dict[tuple, list] = {}
    for o in remaining:
        groups.setdefault(_group_key(o), []).append(o)
    for key in sorted(groups):
        objs = groups[key]
        for horizontal in (True, False):
            lanes: dict[float, list] = {}
            for o in objs:
                cx, cy = o.box.center
                lane = round(cy, 6) if horizontal else round(cx, 6)
                lanes.setdefault(lane, []).append(o)
            for lane in sorted(lanes):
                members = [o for o in lanes[lane] if o in remaining]
                if len(members) < 3:
                    continue
                axis = 0 if horizontal else 1
                ordered = sorted(((o.box.center[axis], o) for o in members), key=lambda t: t[0])
                for run in _arith_runs(ordered):
                    stmts = _match_align(run, names)
                    if stmts is not None:
                        statements.extend(stmts)
                        for o in run:
                            remaining.remove(o)


def _mine_symmetry(remaining, lib: Library, names, statements):
    if not lib.has("symmetrical"):
        return
    groups: dict[tuple, list] = {}
    for o in remaining:
        groups.setdefault(_group_key(o), []).append(o)
    for key in sorted(groups):
        objs = [o for o in groups[key] if o in remaining]
        if len(objs) < 4:
            continue
        by_center = {(round(o.box.center[0], 6), round(o.box.center[1], 6)): o for o in objs}
        xs = sorted({c[0] for c in by_center})
        ys = sorted({c[1] for c in by_center})
        for x1, x2 in itertools.combinations(xs, 2):
            for y1, y2 in itertools.combinations(ys, 2):
                quad = [by_center.get(k) for k in ((x1, y1), (x1, y2), (x2, y1), (x2, y2))]
                if any(q is None or q not in remaining for q in quad):
                    continue
                stmts = _match_symmetrical(quad, names)
                if stmts is not None:
                    statements.extend(stmts)
                    for o in quad:
                        remaining.remove(o)
                        del by_center[(round(o.box.center[0], 6), round(o.box.center[1], 6))]


def _mine_clusters(remaining, lib: Library, names, statements):
    if not lib.has("cluster_placement"):
        return
    groups: dict[tuple, list] = {}
    for o in remaining:
        groups.setdefault(_group_key(o), []).append(o)
    for key in sorted(groups):
        members = [o for o in groups[key] if o in remaining]
        if len(members) < 2:
            continue
        centroid = np.mean([m.box.center for m in members], axis=0)
        anchors = [
            a
            for a in remaining
            if a.category != members[0].category and a.box.area > members[0].box.area + _TOL
        ]
        best = None
        for a in anchors:
            acx, acy = a.box.center
            d = float(np.hypot(centroid[0] - acx, centroid[1] - acy))
            reach = max(a.box.width, a.box.height) / 2.0 + 3.0
            if d > max(0.5, 0.25 * max(a.box.width, a.box.height)):
                continue
            if any(
                np.hypot(m.box.center[0] - acx, m.box.center[1] - acy) > reach for m in members
            ):
                continue
            if best is None or d < best[0]:
                best = (d, a)
        if best is None:
            continue
        anchor = best[1]
        stmts = _match_cluster_placement([anchor] + members, names)
        if stmts is not None:
            statements.extend(stmts)
            remaining.remove(anchor)
            for m in members:
                remaining.remove(m)


def _mine_pairs(remaining, lib: Library, names, statements):
    # a "pair" is a group of exactly two leftover same-category same-size
    # boxes aligned on one axis; larger groups are not chained pairwise
    if not lib.has("parallel"):
        return
    groups: dict[tuple, list] = {}
    for o in remaining:
        groups.setdefault(_group_key(o), []).append(o)
    for key in sorted(groups):
        members = [o for o in groups[key] if o in remaining]
        if len(members) == 2:
            a = members[0]
            acx, acy = a.box.center
            mate = None
            for b in members[1:]:
                bcx, bcy = b.box.center
                if abs(bcy - acy) <= _TOL and abs(bcx - acx) > _TOL:
                    mate = (b, 4 if bcx > acx else 3, abs(bcx - acx))
                    break
                if abs(bcx - acx) <= _TOL and abs(bcy - acy) > _TOL:
                    mate = (b, 1 if bcy > acy else 2, abs(bcy - acy))
                    break
            if mate is None:
                continue
            b, direction, dist = mate
            a_name = names.fresh(a.category)
            b_name = names.fresh(b.category)
            statements.append(
                dsl.Assign(
                    a_name,
                    dsl.Call("furniture", tuple(dsl.Number(c) for c in a.box.as_list())),
                )
            )
            statements.append(
                dsl.Assign(
                    b_name,
                    dsl.Call(
                        "parallel",
                        (dsl.Var(a_name), dsl.Number(dist), dsl.Number(float(direction))),
                    ),
                )
            )
            remaining.remove(a)
            remaining.remove(b)
            members.remove(a)
            members.remove(b)


def _furniture_program(layout: Layout) -> dsl.Program:
    names = _NameAllocator()
    stmts = []
    for o in layout.objects:
        stmts.append(
            dsl.Assign(
                names.fresh(o.category),
                dsl.Call("furniture", tuple(dsl.Number(c) for c in o.box.as_list())),
            )
        )
    return dsl.Program(tuple(stmts))


def recognize_heuristic(layout: Layout, library: Library | None = None) -> dsl.Program:
    """Deterministic pattern-mining recognizer.

    Mines, in fixed priority order: grids (plain, then constant per-row/col
    offsets), rows of >= 3, symmetric quadruples, clusters ringing a larger
    anchor of another category, and axis-aligned pairs; everything left
    becomes a raw furniture statement. Only patterns whose function is in
    the library are articulated. The output re-executes to the input boxes;
    if that self-check ever fails the recognizer falls back to the always
    exact furniture-only program.
    """
    if library is None:
        library = Library.standard()
    remaining = list(layout.objects)
    statements: list = []
    names = _NameAllocator()
    _mine_grids(remaining, library, names, statements)
    _mine_rows(remaining, library, names, statements)
    _mine_symmetry(remaining, library, names, statements)
    _mine_clusters(remaining, library, names, statements)
    _mine_pairs(remaining, library, names, statements)
    for o in remaining:
        statements.append(
            dsl.Assign(
                names.fresh(o.category),
                dsl.Call("furniture", tuple(dsl.Number(c) for c in o.box.as_list())),
            )
        )
    program = dsl.Program(tuple(statements))
    try:
        reconstructed = interp.execute(program, library, layout.room)
        if _layouts_equivalent(layout, reconstructed, tol=1e-9):
            return program
    except ExecError:
        pass
    return _furniture_program(layout)


# ---------------------------------------------------------------------------
# built-in abstraction miner (sleep-stage candidates)
# ---------------------------------------------------------------------------

# stdlib argument positions that shape execution (counts, directions, grid
# dims); differing values split skeletons instead of becoming parameters
_SHAPE_ARGS = {
    "parallel": {2},
    "align": {1, 3},
    "grid": {1, 2},
    "grid_with_offset": {1, 2},
}

_NGRAM_SIZES = (4, 3, 2)


def _skeletonize(window: list) -> tuple | None:
    """Skeleton key + literal slot values for a window of Assign(Call) stmts.

    Number slots become placeholders (recorded in order) except shape args;
    Vars must reference window-bound names (self-contained windows only).
    """
    bound = {}
    key_parts = []
    values: list[float] = []

    def walk(expr, callee, arg_idx, generalizable):
        if isinstance(expr, dsl.Number):
            if generalizable:
                values.append(expr.value)
                return "?"
            return f"n{expr.value!r}"
        if isinstance(expr, dsl.Var):
            if expr.name not in bound:
                raise ValueError("external reference")
            return f"w{bound[expr.name]}"
        if isinstance(expr, dsl.TupleLit):
            return "(" + ",".join(walk(a, None, None, generalizable) for a in expr.items) + ")"
        if isinstance(expr, dsl.ListLit):
            return "[" + ",".join(walk(a, None, None, generalizable) for a in expr.items) + "]"
        if isinstance(expr, dsl.Call):
            shape = _SHAPE_ARGS.get(expr.callee, set())
            parts = []
            for i, a in enumerate(expr.args):
                parts.append(walk(a, expr.callee, i, i not in shape))
            return f"{expr.callee}({','.join(parts)})"
        raise ValueError("unsupported expression")

    try:
        for k, stmt in enumerate(window):
            if not isinstance(stmt, dsl.Assign) or not isinstance(stmt.value, dsl.Call):
                return None
            text = walk(stmt.value, None, None, True)
            key_parts.append(f"{dsl.category_of(stmt.name)}={text}")
            bound[stmt.name] = k
    except ValueError:
        return None
    return tuple(key_parts), tuple(values)


def _rebuild_body(window: list, param_slots: list, literals: tuple) -> tuple:
    """Window statements with generalized slots replaced by parameters and
    bound names rewritten to category-preserving locals."""
    rename = {}
    counter: dict[str, int] = {}
    slot_iter = iter(range(len(literals)))
    params = {i: f"a_{param_slots.index(i)}" for i in param_slots}

    def rebuild(expr, generalizable=True):
        if isinstance(expr, dsl.Number):
            if generalizable:
                i = next(slot_iter)
                if i in params:
                    return dsl.Var(params[i])
                return dsl.Number(literals[i])
            return expr
        if isinstance(expr, dsl.Var):
            return dsl.Var(rename[expr.name])
        if isinstance(expr, dsl.TupleLit):
            return dsl.TupleLit(tuple(rebuild(a, generalizable) for a in expr.items))
        if isinstance(expr, dsl.ListLit):
            return dsl.ListLit(tuple(rebuild(a, generalizable) for a in expr.items))
        if isinstance(expr, dsl.Call):
            shape = _SHAPE_ARGS.get(expr.callee, set())
            return dsl.Call(
                expr.callee,
                tuple(rebuild(a, i not in shape) for i, a in enumerate(expr.args)),
            )
        raise ValueError("unsupported expression")

    body = []
    for stmt in window:
        value = rebuild(stmt.value)
        cat = dsl.category_of(stmt.name)
        counter[cat] = counter.get(cat, 0) + 1
        local = f"{cat}_{counter[cat]}"
        rename[stmt.name] = local
        body.append(dsl.Assign(local, value))
    body.append(dsl.Return(dsl.ListLit(tuple(dsl.Var(rename[s.name]) for s in window))))
    return tuple(body)


def mine_ngram_candidates(
    programs: list, library: Library, max_candidates: int = 4
) -> list[dsl.FuncDef]:
    """Anti-unification over repeated consecutive statement n-grams: literal
    slots equal across all occurrences stay literal, differing slots become
    parameters. Emits one parameterized FuncDef per promising skeleton."""
    occurrences: dict[tuple, list] = {}
    for pi, program in enumerate(programs):
        stmts = program.statements
        for size in _NGRAM_SIZES:
            for start in range(0, len(stmts) - size + 1):
                window = list(stmts[start : start + size])
                skel = _skeletonize(window)
                if skel is None:
                    continue
                key, values = skel
                occurrences.setdefault(key, []).append((pi, window, values))

    ranked = []
    for key, occ in sorted(occurrences.items()):
        if len(occ) < 2 or len({pi for pi, _, _ in occ}) < 2:
            continue
        value_rows = [values for _, _, values in occ]
        n_slots = len(value_rows[0])
        param_slots = [
            i
            for i in range(n_slots)
            if max(row[i] for row in value_rows) - min(row[i] for row in value_rows) > _TOL
        ]
        window_tokens = description_length(dsl.Program(tuple(occ[0][1])))
        call_tokens = 4 + max(0, 2 * len(param_slots) - 1)
        est_gain = len(occ) * (window_tokens - call_tokens)
        if est_gain <= 0:
            continue
        ranked.append((est_gain, key, occ[0][1], param_slots, occ[0][2]))
    ranked.sort(key=lambda t: (-t[0], t[1]))

    candidates = []
    index = 0
    for est_gain, key, window, param_slots, literals in ranked[: 2 * max_candidates]:
        while library.has(f"f_{index}") or any(c.name == f"f_{index}" for c in candidates):
            index += 1
        try:
            body = _rebuild_body(window, param_slots, literals)
            fd = dsl.FuncDef(f"f_{index}", tuple(f"a_{i}" for i in range(len(param_slots))), body)
            dsl.validate_def(fd)
        except (ValueError, SceneForgeError):
            continue
        candidates.append(fd)
        if len(candidates) >= max_candidates:
            break
    return candidates


def propose_candidates(programs: list, library: Library) -> list[dsl.FuncDef]:
    """Built-in sleep-stage proposer: pattern functions not yet in the
    library, then anti-unified n-grams from the accepted programs."""
    out = [stdlib_def(name) for name in STDLIB_SIGNATURES if not library.has(name)]
    out.extend(mine_ngram_candidates(programs, library))
    return out


# ---------------------------------------------------------------------------
# remote proposal client
# ---------------------------------------------------------------------------

PROPOSER_URL_ENV = "SCENEFORGE_PROPOSER_URL"
PROPOSER_TOKEN_ENV = "SCENEFORGE_PROPOSER_TOKEN"


class ProposalClient(Protocol):
    def propose(self, request: dict) -> dict: ...


class HttpProposalClient:
    """POSTs proposal requests as a single JSON document to the endpoint in
    ``SCENEFORGE_PROPOSER_URL`` with a bearer token from
    ``SCENEFORGE_PROPOSER_TOKEN``; expects ``{"text", "finish_reason"}``."""

    def __init__(self, url: str | None = None, token: str | None = None, timeout: float = 60.0):
        self.url = url or os.environ.get(PROPOSER_URL_ENV)
        self.token = token or os.environ.get(PROPOSER_TOKEN_ENV)
        self.timeout = timeout
        if not self.url:
            raise ProposalUnavailableError(
                f"no proposer endpoint configured (set {PROPOSER_URL_ENV})"
            )

    def propose(self, request: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            resp = requests.post(self.url, json=request, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as e:
            raise ProposalUnavailableError(f"proposer request failed: {e}") from e


@dataclass
class RecognitionResult:
    program: dsl.Program | None
    miou: float
    accepted: bool
    source: str  # "heuristic" | "remote"
    failures: int = 0


def recognize_remote(
    layout: Layout,
    library: Library,
    client: ProposalClient,
    max_retries: int = 3,
    accept_threshold: float = ACCEPT_THRESHOLD,
    examples: tuple = (),
) -> RecognitionResult:
    """Ask the remote proposal model for the program underlying a layout.

    Parse/execution failures are fed back to the model and retried up to
    ``max_retries`` times; transport failures exhaust the same budget and
    then raise. Returns the best attempt seen."""
    feedback: list[str] = []
    best = RecognitionResult(None, 0.0, False, "remote")
    transport_error: Exception | None = None
    for _ in range(max_retries):
        payload = {"layout": layout.to_dict()}
        if examples:
            payload["examples"] = list(examples)
        if feedback:
            payload["feedback"] = feedback[-3:]
        request = {"mode": "recognize", "library": library.to_text(), "payload": payload}
        try:
            response = client.propose(request)
        except ProposalUnavailableError as e:
            transport_error = e
            continue
        transport_error = None
        text = response.get("text", "") if isinstance(response, dict) else ""
        try:
            program = dsl.parse(text)
            predicted = interp.execute(program, library, layout.room)
        except SceneForgeError as e:
            best.failures += 1
            feedback.append(str(e))
            continue
        miou = verify(layout, predicted)
        if program is not None and miou >= best.miou:
            best = RecognitionResult(program, miou, miou >= accept_threshold, "remote", best.failures)
        if best.accepted:
            return best
        feedback.append(f"program executed but reconstruction mIoU {miou:.4f} is below threshold")
    if transport_error is not None and best.program is None:
        raise ProposalUnavailableError(
            f"remote proposer unavailable after {max_retries} attempts: {transport_error}"
        )
    return best


def remote_abstractions(programs: list, library: Library, client: ProposalClient) -> list[dsl.FuncDef]:
    """Ask the remote proposal model for candidate abstractions; responses
    that do not parse as function definitions are discarded."""
    request = {
        "mode": "abstract",
        "library": library.to_text(),
        "payload": {"programs": [dsl.format_program(p) for p in programs]},
    }
    response = client.propose(request)
    text = response.get("text", "") if isinstance(response, dict) else ""
    try:
        parsed = dsl.parse(text)
    except SceneForgeError:
        return []
    return [fd for fd in parsed.defs if not library.has(fd.name)]


# ---------------------------------------------------------------------------
# the loop
# ---------------------------------------------------------------------------

@dataclass
class WakeSleepConfig:
    iterations: int = 3
    accept_threshold: float = ACCEPT_THRESHOLD
    min_gain: float = 8.0
    max_new_functions: int = 2  # admissions per sleep phase
    initial_library: Library | None = None


@dataclass
class IterationStats:
    iteration: int
    acceptance_rate: float
    mean_funcs: float
    mean_dl: float
    admitted: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "acceptance_rate": self.acceptance_rate,
            "mean_funcs": self.mean_funcs,
            "mean_dl": self.mean_dl,
            "admitted": list(self.admitted),
        }


@dataclass
class WakeSleepResult:
    library: Library
    programs: list  # best accepted program per corpus index (None if never accepted)
    stats: list


def run_wake_sleep(
    corpus: list[Layout],
    recognizer: Callable | None = None,
    proposer: Callable | None = None,
    config: WakeSleepConfig | None = None,
) -> WakeSleepResult:
    """Alternate wake (recognize + verify every layout) and sleep (propose
    abstractions, score by corpus compression, admit by gain) for
    ``config.iterations`` rounds.

    Per layout the best program found so far is kept (highest mIoU, ties by
    shorter description), so the mean corpus description length never
    increases across iterations."""
    if not corpus:
        raise SceneForgeError("run_wake_sleep requires a non-empty corpus")
    config = config or WakeSleepConfig()
    recognizer = recognizer or recognize_heuristic
    library = config.initial_library or Library.bootstrap()

    best_prog: list = [None] * len(corpus)
    best_miou = [0.0] * len(corpus)
    best_dl = [0] * len(corpus)
    stats: list[IterationStats] = []

    for iteration in range(config.iterations):
        accepted_now = 0
        for i, layout in enumerate(corpus):
            result = recognizer(layout, library)
            program = result.program if isinstance(result, RecognitionResult) else result
            if program is None:
                continue
            try:
                predicted = interp.execute(program, library, layout.room)
            except ExecError:
                continue
            miou = verify(layout, predicted)
            if miou >= config.accept_threshold:
                accepted_now += 1
            dl = description_length(program)
            if best_prog[i] is None:
                take = True
            elif miou > best_miou[i] + 1e-12:
                take = True
            else:
                take = abs(miou - best_miou[i]) <= 1e-12 and dl < best_dl[i]
            if take:
                best_prog[i], best_miou[i], best_dl[i] = program, miou, dl

        accepted_idx = [
            i for i in range(len(corpus))
            if best_prog[i] is not None and best_miou[i] >= config.accept_threshold
        ]
        programs = [best_prog[i] for i in accepted_idx]

        admitted: list[str] = []
        if programs:
            candidates = list(
                proposer(programs, library) if proposer else propose_candidates(programs, library)
            )
            for _ in range(config.max_new_functions):
                scored = []
                for cand in candidates:
                    if library.has(cand.name):
                        continue
                    try:
                        new_corpus, report = rewrite_corpus(programs, cand, library)
                    except SceneForgeError:
                        continue
                    if accept_candidate(report, config.min_gain):
                        scored.append((report.gain, cand.name, cand, new_corpus))
                if not scored:
                    break
                scored.sort(key=lambda t: (-t[0], t[1]))
                gain, name, cand, new_corpus = scored[0]
                library = library.with_function(cand)
                programs = new_corpus
                admitted.append(name)
                candidates = [c for c in candidates if c.name != name]
            for idx, program in zip(accepted_idx, programs):
                best_prog[idx] = program
                best_dl[idx] = description_length(program)

        if programs:
            mean_funcs = funcs_per_program(programs)
            mean_dl = float(np.mean([best_dl[i] for i in accepted_idx]))
        else:
            mean_funcs = 0.0
            mean_dl = 0.0
        stats.append(
            IterationStats(
                iteration=iteration,
                acceptance_rate=accepted_now / len(corpus),
                mean_funcs=mean_funcs,
                mean_dl=mean_dl,
                admitted=admitted,
            )
        )

    return WakeSleepResult(library=library, programs=best_prog, stats=stats)
