"""Command-line entry point for the five-stage pipeline.

Every command is reproducible: the same inputs and seed produce
byte-identical outputs (JSON with sorted keys and 9-significant-digit
floats, deterministic SVG, raw little-endian weight blobs). No command
touches the network unless ``SCENEFORGE_PROPOSER_URL`` is set and the
command asks for the remote proposer.

A config file (``--config``) is a flat ``key = value`` document whose keys
mirror the command flags (``seed = 7``, ``iterations = 3``,
``accept_threshold = 0.95``, ...); flags given explicitly win.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dsl, evaluate, interp, synth, wakesleep
from .assemble import AssembledScene, AssetCatalog, assemble
from .errors import SceneForgeError
from .evaluate import dump_json
from .geometry import Aabb
from .interp import Layout, Room
from .library import Library, description_length
from .pose import (
    PoseModel,
    PoseModelConfig,
    TrainConfig,
    categories_of,
    example_from_points,
    load_dataset,
    pose_metrics,
    predict,
    save_dataset,
    train,
)


def _read_text(path) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def _write_text(path, text: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _load_layout(path) -> Layout:
    return Layout.from_dict(_read_json(path))


def _load_library(path) -> Library:
    if path is None:
        return Library.standard()
    return Library.load(path)


def _load_thetas(path) -> dict:
    data = _read_json(path)
    thetas = data.get("thetas", data)
    return {int(k): float(v) for k, v in thetas.items()}


def _emit(args, payload: dict, text: str | None = None):
    if getattr(args, "json", False):
        sys.stdout.write(dump_json(payload))
    elif text is not None:
        sys.stdout.write(text)


def parse_config_file(path) -> dict:
    """Flat ``key = value`` config: numbers, booleans and strings."""
    values = {}
    for lineno, raw in enumerate(_read_text(path).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneForgeError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip().strip("\"'")
        if value.lower() in {"true", "false"}:
            values[key] = value.lower() == "true"
        else:
            try:
                values[key] = int(value)
            except ValueError:
                try:
                    values[key] = float(value)
                except ValueError:
                    values[key] = value
    return values


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_parse(args) -> int:
    program = dsl.parse(_read_text(args.file))
    canonical = dsl.format_program(program)
    if args.output:
        _write_text(args.output, canonical)
    _emit(
        args,
        {
            "ok": True,
            "statements": len(program.statements),
            "defs": len(program.defs),
            "description_length": description_length(program),
        },
        canonical if not args.output else None,
    )
    return 0


def _room_for(args, layout_boxes=None) -> Room:
    if args.room:
        return Room.from_dict(_read_json(args.room))
    if layout_boxes:
        x0 = min(b.x_min for b in layout_boxes) - 0.5
        y0 = min(b.y_min for b in layout_boxes) - 0.5
        x1 = max(b.x_max for b in layout_boxes) + 0.5
        y1 = max(b.y_max for b in layout_boxes) + 0.5
        return Room.from_bounds(Aabb(x0, y0, x1, y1))
    return Room.from_bounds(Aabb(0.0, 0.0, 10.0, 10.0))


def cmd_exec(args) -> int:
    program = dsl.parse(_read_text(args.file))
    library = _load_library(args.library)
    if args.room:
        room = Room.from_dict(_read_json(args.room))
    else:
        probe = interp.execute(program, library, Room.from_bounds(Aabb(0, 0, 1, 1)))
        room = _room_for(args, [o.box for o in probe.objects] or [Aabb(0, 0, 10, 10)])
    layout = interp.execute(program, library, room)
    out = dump_json(layout.to_dict())
    if args.output:
        _write_text(args.output, out)
    _emit(args, {"objects": len(layout.objects)}, out if not args.output else None)
    return 0


def cmd_verify(args) -> int:
    target = _load_layout(args.target)
    pred = _load_layout(args.pred)
    miou = wakesleep.verify(target, pred)
    _emit(args, {"miou": miou}, f"mIoU {miou:.6f}\n")
    return 0


def cmd_mine(args) -> int:
    layout = _load_layout(args.layout)
    library = _load_library(args.library)
    program = wakesleep.recognize_heuristic(layout, library)
    predicted = interp.execute(program, library, layout.room)
    miou = wakesleep.verify(layout, predicted)
    text = dsl.format_program(program)
    if args.output:
        _write_text(args.output, text)
    _emit(
        args,
        {"miou": miou, "description_length": description_length(program)},
        text if not args.output else None,
    )
    return 0


def _corpus_paths(spec: str) -> list:
    p = Path(spec)
    if p.is_dir():
        return sorted(str(q) for q in p.glob("*.json"))
    return sorted(glob.glob(spec))


def cmd_learn(args) -> int:
    paths = _corpus_paths(args.corpus)
    if not paths:
        raise SceneForgeError(f"no layout files matched {args.corpus!r}")
    corpus = [_load_layout(p) for p in paths]
    config = wakesleep.WakeSleepConfig(
        iterations=args.iterations,
        accept_threshold=args.accept_threshold,
        min_gain=args.min_gain,
        initial_library=Library.load(args.library) if args.library else None,
    )
    recognizer = None
    if args.remote:
        client = wakesleep.HttpProposalClient(timeout=args.timeout)

        def recognizer(layout, library):
            try:
                return wakesleep.recognize_remote(
                    layout, library, client, max_retries=args.retries,
                    accept_threshold=config.accept_threshold,
                )
            except SceneForgeError:
                return wakesleep.recognize_heuristic(layout, library)

    result = wakesleep.run_wake_sleep(corpus, recognizer=recognizer, config=config)
    result.library.save(args.output)
    if args.programs_dir:
        os.makedirs(args.programs_dir, exist_ok=True)
        for path, program in zip(paths, result.programs):
            if program is None:
                continue
            name = Path(path).stem + ".scene"
            _write_text(Path(args.programs_dir) / name, dsl.format_program(program))
    stats = [s.to_dict() for s in result.stats]
    if args.stats:
        _write_text(args.stats, dump_json({"schema": 1, "iterations": stats}))
    _emit(
        args,
        {"library": list(result.library.names()), "iterations": stats},
        "".join(
            f"iter {s['iteration']}: acceptance {s['acceptance_rate']:.2f} "
            f"funcs {s['mean_funcs']:.2f} dl {s['mean_dl']:.1f} admitted {s['admitted']}\n"
            for s in stats
        ),
    )
    return 0


def cmd_gen(args) -> int:
    library = _load_library(args.library)
    client = wakesleep.HttpProposalClient(timeout=args.timeout)
    examples = [_read_text(p) for p in args.examples or []]
    os.makedirs(args.output, exist_ok=True)
    written = []
    failures = 0
    for i in range(args.count):
        request = {
            "mode": "generate",
            "library": library.to_text(),
            "payload": {"examples": examples, "index": i},
        }
        response = client.propose(request)
        text = response.get("text", "")
        try:
            program = dsl.parse(text)
            interp.execute(program, library, Room.from_bounds(Aabb(0, 0, 20, 20)))
        except SceneForgeError:
            failures += 1
            continue
        path = Path(args.output) / f"generated_{i:04d}.scene"
        _write_text(path, dsl.format_program(program))
        written.append(str(path))
    _emit(
        args,
        {"written": written, "failures": failures},
        f"wrote {len(written)} programs ({failures} failures)\n",
    )
    return 0


def cmd_extract_gt(args) -> int:
    library = _load_library(args.library)
    raw = _read_text(args.scenes).strip()
    if raw.startswith("["):
        scenes = json.loads(raw)
    else:
        scenes = [json.loads(line) for line in raw.splitlines() if line.strip()]
    examples = [example_from_points(scene, library) for scene in scenes]
    save_dataset(examples, args.output)
    _emit(
        args,
        {"examples": len(examples), "objects": sum(len(e.layout.objects) for e in examples)},
        f"wrote {len(examples)} examples to {args.output}\n",
    )
    return 0


def cmd_train_pose(args) -> int:
    dataset = load_dataset(args.dataset)
    model_config = PoseModelConfig(
        dim=args.dim,
        heads=args.heads,
        layers=args.layers,
        categories=categories_of(dataset),
        condition_on_dependency=not args.no_dependency_conditioning,
    )
    config = TrainConfig(
        learning_rate=args.learning_rate,
        steps=args.steps,
        batch_size=args.batch_size,
        seed=args.seed,
        upsample_threshold=args.upsample_threshold,
        upsample_factor=args.upsample_factor,
    )
    model = train(dataset, config, model_config)
    model.save(args.output)
    metrics = None
    if args.report_train_metrics:
        per = [pose_metrics(predict(model, ex.layout), ex) for ex in dataset]
        metrics = {
            "primary_acc": float(np.mean([m.primary_acc for m in per])),
            "dependent_acc": float(np.mean([m.dependent_acc for m in per])),
            "mean_iou": float(np.mean([m.mean_iou for m in per])),
        }
    _emit(
        args,
        {"model": str(args.output), "steps": config.steps, "train_metrics": metrics},
        f"trained {config.steps} steps -> {args.output}\n"
        + (f"train metrics: {metrics}\n" if metrics else ""),
    )
    return 0


def cmd_predict_pose(args) -> int:
    model = PoseModel.load(args.model)
    layout = _load_layout(args.layout)
    thetas = predict(model, layout)
    out = dump_json({"thetas": {str(k): v for k, v in thetas.items()}})
    if args.output:
        _write_text(args.output, out)
    _emit(args, {"thetas": {str(k): v for k, v in thetas.items()}}, out if not args.output else None)
    return 0


def cmd_assemble(args) -> int:
    layout = _load_layout(args.layout)
    thetas = _load_thetas(args.thetas)
    catalog = AssetCatalog.load(args.catalog)
    scene = assemble(layout, thetas, catalog)
    out = dump_json(scene.to_dict())
    if args.output:
        _write_text(args.output, out)
    _emit(args, {"placements": len(scene.placements)}, out if not args.output else None)
    return 0


def cmd_render(args) -> int:
    layout = _load_layout(args.layout)
    thetas = _load_thetas(args.thetas) if args.thetas else None
    svg = evaluate.render_svg(layout, thetas)
    with open(args.output, "wb") as fh:
        fh.write(svg)
    _emit(args, {"bytes": len(svg), "output": str(args.output)}, f"wrote {args.output}\n")
    return 0


def _load_corpus_triples(directory: str) -> list:
    """Corpus convention: every ``*.json`` layout, with optional sibling
    ``<stem>.thetas.json`` and ``<stem>.scene`` files."""
    triples = []
    for path in _corpus_paths(directory):
        p = Path(path)
        if p.name.endswith(".thetas.json"):
            continue
        layout = _load_layout(p)
        thetas_file = p.parent / (p.stem + ".thetas.json")
        thetas = _load_thetas(thetas_file) if thetas_file.exists() else None
        scene_file = p.parent / (p.stem + ".scene")
        program = dsl.parse(_read_text(scene_file)) if scene_file.exists() else None
        triples.append((layout, thetas, program))
    return triples


def cmd_eval(args) -> int:
    generated = _load_corpus_triples(args.generated)
    reference = _load_corpus_triples(args.reference)
    report = evaluate.eval_report(generated, reference)
    out = dump_json(report)
    if args.output:
        _write_text(args.output, out)
    if args.panel:
        with open(args.panel, "wb") as fh:
            fh.write(evaluate.report_panel_svg(report))
    _emit(args, report, out if not args.output else None)
    return 0


def cmd_synth(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.kind in {"corpus", "points"}:
        os.makedirs(args.output, exist_ok=True)
    if args.kind == "corpus":
        kinds = tuple(args.kinds.split(",")) if args.kinds else ("row", "grid")
        layouts = synth.pattern_corpus(rng, args.count, kinds=kinds)
        for i, layout in enumerate(layouts):
            _write_text(Path(args.output) / f"layout_{i:04d}.json", dump_json(layout.to_dict()))
        _emit(args, {"layouts": len(layouts)}, f"wrote {len(layouts)} layouts to {args.output}\n")
    elif args.kind == "points":
        scenes = [synth.points_scene(rng) for _ in range(args.count)]
        path = Path(args.output) / "scenes.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for scene in scenes:
                fh.write(json.dumps(scene, sort_keys=True) + "\n")
        _emit(args, {"scenes": len(scenes)}, f"wrote {len(scenes)} scenes to {path}\n")
    elif args.kind == "catalog":
        synth.synthetic_catalog().save(args.output)
        _emit(args, {"output": str(args.output)}, f"wrote catalog to {args.output}\n")
    elif args.kind == "room":
        room = Room.from_bounds(Aabb(0.0, 0.0, args.width, args.height))
        _write_text(args.output, dump_json(room.to_dict()))
        _emit(args, {"output": str(args.output)}, f"wrote room to {args.output}\n")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sceneforge",
        description="Factored scene generation: programs, libraries, poses, assembly.",
    )
    parser.add_argument("--config", help="key = value config file mirroring the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--json", action="store_true", help="machine-readable stdout")
        return p

    p = add("parse", cmd_parse, help="parse and canonicalize a .scene program")
    p.add_argument("file")
    p.add_argument("-o", "--output")

    p = add("exec", cmd_exec, help="execute a program into a layout")
    p.add_argument("file")
    p.add_argument("--room", help="room JSON (bounds + walls)")
    p.add_argument("--library", help=".scenelib file (default: full built-in set)")
    p.add_argument("-o", "--output")

    p = add("verify", cmd_verify, help="reconstruction mIoU between two layouts")
    p.add_argument("--target", required=True)
    p.add_argument("--pred", required=True)

    p = add("mine", cmd_mine, help="recognize the program underlying a layout")
    p.add_argument("--layout", required=True)
    p.add_argument("--library")
    p.add_argument("-o", "--output")

    p = add("learn", cmd_learn, help="wake-sleep library learning over a layout corpus")
    p.add_argument("--corpus", required=True, help="directory or glob of layout JSONs")
    p.add_argument("--iterations", type=int, default=3)
    p.add_argument("--accept-threshold", type=float, default=wakesleep.ACCEPT_THRESHOLD)
    p.add_argument("--min-gain", type=float, default=8.0)
    p.add_argument("--library", help="initial .scenelib (default: bootstrap)")
    p.add_argument("--remote", action="store_true", help="use the remote proposer for recognition")
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--programs-dir", help="write accepted programs here")
    p.add_argument("--stats", help="write per-iteration stats JSON here")
    p.add_argument("-o", "--output", required=True, help="output .scenelib")

    p = add("gen", cmd_gen, help="sample new programs from the remote proposer")
    p.add_argument("--library")
    p.add_argument("--examples", nargs="*", help="few-shot example .scene files")
    p.add_argument("-n", "--count", type=int, default=1)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = add("extract-gt", cmd_extract_gt, help="orientation ground truth from footprint points")
    p.add_argument("--scenes", required=True, help="scene JSON array or JSONL of point scenes")
    p.add_argument("--library")
    p.add_argument("-o", "--output", required=True, help="output dataset .jsonl")

    p = add("train-pose", cmd_train_pose, help="train the two-stage pose model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--upsample-threshold", type=float, default=0.3)
    p.add_argument("--upsample-factor", type=int, default=3)
    p.add_argument("--no-dependency-conditioning", action="store_true")
    p.add_argument("--report-train-metrics", action="store_true")
    p.add_argument("-o", "--output", required=True, help="output .posemodel")

    p = add("predict-pose", cmd_predict_pose, help="predict per-object orientations")
    p.add_argument("--model", required=True)
    p.add_argument("--layout", required=True)
    p.add_argument("-o", "--output")

    p = add("assemble", cmd_assemble, help="retrieve assets and compute placements")
    p.add_argument("--layout", required=True)
    p.add_argument("--thetas", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("-o", "--output")

    p = add("render", cmd_render, help="render a layout to SVG")
    p.add_argument("--layout", required=True)
    p.add_argument("--thetas")
    p.add_argument("-o", "--output", required=True)

    p = add("eval", cmd_eval, help="distribution + program metrics between two corpora")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--panel", help="write a category-count SVG panel")
    p.add_argument("-o", "--output")

    p = add("synth", cmd_synth, help="generate synthetic fixtures")
    p.add_argument("kind", choices=["corpus", "points", "catalog", "room"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--kinds", help="comma-separated pattern kinds for corpus")
    p.add_argument("--width", type=float, default=10.0)
    p.add_argument("--height", type=float, default=8.0)
    p.add_argument("-o", "--output", required=True)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    if args.config:
        # config supplies values for flags not given explicitly on argv
        explicit = {
            tok[2:].split("=", 1)[0].replace("-", "_")
            for tok in argv
            if tok.startswith("--")
        }
        for key, value in parse_config_file(args.config).items():
            if key not in explicit and hasattr(args, key):
                setattr(args, key, value)
    try:
        return args.fn(args)
    except SceneForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
