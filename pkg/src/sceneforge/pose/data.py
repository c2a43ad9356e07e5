"""Ground-truth orientation labeling and pose-dataset construction.

Orientation labels come from the tightest-rotated-box sweep over object
footprint points. Near-square footprints (aspect ratio < 1.1) make the
sweep angle ill-defined up to 90 degrees; those labels are flagged low
confidence and excluded from accuracy metrics.

Datasets are JSON lines, one example per line.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from ..errors import DegenerateGeometryError, SceneForgeError
from ..geometry import Aabb, min_area_orientation, theta_to_bin
from ..interp import Layout, PlacedObject, Room, ROLE_DEPENDENT, ROLE_PRIMARY

log = logging.getLogger(__name__)

LOW_CONFIDENCE_ASPECT = 1.1


@dataclass
class ExtractedPose:
    theta: float
    bin: int
    box: Aabb
    low_confidence: bool


def extract_gt(point_sets) -> list:
    """Per-object (theta, bin, Aabb, low-confidence flag) from footprint
    points; degenerate point sets are skipped with a warning (None entry)."""
    out = []
    for idx, points in enumerate(point_sets):
        try:
            theta, obb = min_area_orientation(points)
        except DegenerateGeometryError as e:
            log.warning("skipping object %d: %s", idx, e)
            out.append(None)
            continue
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        box = Aabb(min(xs), min(ys), max(xs), max(ys))
        out.append(
            ExtractedPose(theta, theta_to_bin(theta), box, obb.aspect_ratio < LOW_CONFIDENCE_ASPECT)
        )
    return out


@dataclass
class PoseExample:
    """A layout with per-object orientation labels and program provenance."""

    layout: Layout
    thetas: dict  # object id -> ground-truth theta (degrees)
    labels: dict  # object id -> orientation bin
    low_confidence: set = field(default_factory=set)

    def __post_init__(self):
        ids = {o.id for o in self.layout.objects}
        if set(self.labels) != ids or set(self.thetas) != ids:
            raise SceneForgeError("labels must cover exactly the layout's objects")

    @property
    def primary_ids(self) -> list:
        return [o.id for o in self.layout.objects if o.role == ROLE_PRIMARY]

    @property
    def dependent_ids(self) -> list:
        return [o.id for o in self.layout.objects if o.role == ROLE_DEPENDENT]

    def difficulty(self) -> float:
        """Fraction of objects with a non-axis-aligned label (bin != 0)."""
        if not self.labels:
            return 0.0
        return sum(1 for b in self.labels.values() if b != 0) / len(self.labels)

    def to_dict(self) -> dict:
        return {
            "layout": self.layout.to_dict(),
            "thetas": {str(k): v for k, v in self.thetas.items()},
            "labels": {str(k): v for k, v in self.labels.items()},
            "low_confidence": sorted(self.low_confidence),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PoseExample":
        return cls(
            layout=Layout.from_dict(d["layout"]),
            thetas={int(k): float(v) for k, v in d["thetas"].items()},
            labels={int(k): int(v) for k, v in d["labels"].items()},
            low_confidence=set(d.get("low_confidence", [])),
        )


def save_dataset(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_dict(), sort_keys=True) + "\n")


def load_dataset(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PoseExample.from_dict(json.loads(line)))
    return out


def categories_of(examples) -> tuple:
    """Model vocabulary: '<unk>' plus every category present, sorted."""
    cats = sorted({o.category for ex in examples for o in ex.layout.objects})
    return ("<unk>",) + tuple(cats)


def example_from_points(scene: dict, library=None) -> PoseExample:
    """Build a PoseExample from a scene of per-object footprint point sets.

    Extracts each object's orientation and axis-aligned box, recognizes the
    underlying program to recover per-object provenance, and transfers the
    labels onto the executed layout via per-category box matching.
    """
    from .. import interp
    from ..library import Library
    from ..wakesleep import recognize_heuristic

    if library is None:
        library = Library.standard()
    room = Room.from_dict(scene)
    raw_objects = scene.get("objects", [])
    extracted = extract_gt([o["points"] for o in raw_objects])
    kept = [(o["category"], e) for o, e in zip(raw_objects, extracted) if e is not None]

    provisional = Layout(
        objects=[
            PlacedObject(i, cat, e.box, ROLE_PRIMARY, None, "furniture(0.0, 0.0, 1.0, 1.0)")
            for i, (cat, e) in enumerate(kept)
        ],
        walls=room.walls,
        room_bounds=room.bounds,
    )
    program = recognize_heuristic(provisional, library)
    executed = interp.execute(program, library, room)
    if len(executed.objects) != len(kept):
        raise SceneForgeError("recognized program does not reproduce the extracted objects")

    # transfer labels onto executed objects by matching (category, box)
    unmatched = list(range(len(kept)))
    thetas: dict[int, float] = {}
    labels: dict[int, int] = {}
    low_conf: set[int] = set()
    for obj in executed.objects:
        best = None
        for j in unmatched:
            cat, e = kept[j]
            if cat != obj.category:
                continue
            dev = max(abs(a - b) for a, b in zip(e.box.as_list(), obj.box.as_list()))
            if dev <= 1e-6 and (best is None or dev < best[0]):
                best = (dev, j)
        if best is None:
            raise SceneForgeError(f"no extracted object matches executed object {obj.id}")
        _, j = best
        unmatched.remove(j)
        _, e = kept[j]
        thetas[obj.id] = e.theta
        labels[obj.id] = e.bin
        if e.low_confidence:
            low_conf.add(obj.id)
    return PoseExample(executed, thetas, labels, low_conf)
