"""Object retrieval, facing resolution and placement transforms.

Angle conventions: box orientations (theta) are counterclockwise degrees on
[0, 180). Headings (facing directions) are counterclockwise degrees from +y
on [0, 360): heading H points along (-sin H, cos H). An asset's ``front``
annotation is its facing heading in the canonical frame; a placement rotated
by r gives it the world heading front + r.

The mod-180 orientation axis admits two placements (r and r + 180); facing
resolution picks the one pointing away from the object's region boundary and
never changes the orientation axis itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import RetrievalError, SceneForgeError
from .geometry import Aabb, OrientedBox
from .interp import Layout, PlacedObject, ROLE_PRIMARY


def heading_to_vector(heading: float) -> tuple[float, float]:
    rad = math.radians(heading)
    return (-math.sin(rad), math.cos(rad))


@dataclass(frozen=True)
class AssetEntry:
    asset_id: str
    category: str
    dims: tuple[float, float]  # (width, depth) of the canonical footprint
    front: float  # facing heading in the canonical frame, [0, 360)

    def __post_init__(self):
        if self.dims[0] <= 0.0 or self.dims[1] <= 0.0:
            raise SceneForgeError(f"asset {self.asset_id!r} has non-positive dims {self.dims}")
        if self.category != self.category.lower():
            raise SceneForgeError(f"asset categories are lowercase: {self.category!r}")
        if not 0.0 <= self.front < 360.0:
            raise SceneForgeError(f"front must be in [0, 360): {self.front!r}")


@dataclass
class AssetCatalog:
    entries: list

    def __post_init__(self):
        ids = [e.asset_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise SceneForgeError("duplicate asset_id in catalog")

    def categories(self) -> list:
        return sorted({e.category for e in self.entries})

    def of_category(self, category: str) -> list:
        return [e for e in self.entries if e.category == category]

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "asset_id": e.asset_id,
                    "category": e.category,
                    "dims": list(e.dims),
                    "front": e.front,
                }
                for e in self.entries
            ]
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssetCatalog":
        return cls(
            [
                AssetEntry(
                    asset_id=e["asset_id"],
                    category=e["category"],
                    dims=(float(e["dims"][0]), float(e["dims"][1])),
                    front=float(e["front"]),
                )
                for e in d.get("entries", [])
            ]
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AssetCatalog":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def retrieve(obb: OrientedBox, category: str, catalog: AssetCatalog) -> tuple[AssetEntry, bool]:
    """Nearest same-category entry by footprint dimensions, allowing a 90
    degree footprint swap; returns (entry, swapped). Ties prefer the
    unswapped orientation, then the lexicographically smallest asset_id."""
    entries = catalog.of_category(category)
    if not entries:
        raise RetrievalError(
            f"no catalog entry for category {category!r}; available: {catalog.categories()}"
        )
    target = (2.0 * obb.half_extents[0], 2.0 * obb.half_extents[1])
    best = None
    for entry in sorted(entries, key=lambda e: e.asset_id):
        for swapped in (False, True):
            w, d = entry.dims if not swapped else (entry.dims[1], entry.dims[0])
            dist = math.hypot(target[0] - w, target[1] - d)
            key = (dist, swapped, entry.asset_id)
            if best is None or key < best[0]:
                best = (key, entry, swapped)
    return best[1], best[2]


def region_boundary(obj: PlacedObject, layout: Layout) -> Aabb:
    """Primary objects face away from the room bounds; dependent objects from
    the tight box around their dependency target and all its dependents."""
    if obj.role == ROLE_PRIMARY:
        return layout.room_bounds
    target_id = obj.dependency_target
    try:
        region = layout.object_by_id(target_id).box
    except KeyError as e:
        raise SceneForgeError(f"object {obj.id} has dangling target {target_id}") from e
    for other in layout.objects:
        if other.dependency_target == target_id:
            region = region.union(other.box)
    return region


def _nearest_boundary_away(center: tuple[float, float], region: Aabb):
    """Unit vector from the nearest region-boundary point toward the center,
    or None when the direction is ambiguous (center on the boundary or
    equidistant to several edges)."""
    cx, cy = center
    if not region.contains_point(cx, cy):
        qx = min(max(cx, region.x_min), region.x_max)
        qy = min(max(cy, region.y_min), region.y_max)
        return _normalize(cx - qx, cy - qy)
    dists = (
        (cx - region.x_min, (1.0, 0.0)),
        (region.x_max - cx, (-1.0, 0.0)),
        (cy - region.y_min, (0.0, 1.0)),
        (region.y_max - cy, (0.0, -1.0)),
    )
    dmin = min(d for d, _ in dists)
    winners = [v for d, v in dists if d <= dmin + 1e-9]
    if len(winners) != 1 or dmin <= 1e-9:
        return None
    return winners[0]


def _normalize(x: float, y: float):
    n = math.hypot(x, y)
    if n <= 1e-12:
        return None
    return (x / n, y / n)


def resolve_facing(obb: OrientedBox, region: Aabb, front: float) -> float:
    """Facing heading for an oriented box: of the two rotations compatible
    with the mod-180 axis, pick the one whose front heading points away from
    the nearest region boundary; ties keep r = theta."""
    away = _nearest_boundary_away(obb.center, region)
    r = obb.theta
    if away is not None:
        dots = []
        for cand in (obb.theta, obb.theta + 180.0):
            vx, vy = heading_to_vector(front + cand)
            dots.append(vx * away[0] + vy * away[1])
        if dots[1] > dots[0] + 1e-12:
            r = obb.theta + 180.0
    return (front + r) % 360.0


@dataclass
class Placement:
    asset_id: str
    translation: tuple[float, float]
    rotation: float  # degrees in [0, 360)
    scale: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "translation": list(self.translation),
            "rotation": self.rotation,
            "scale": list(self.scale),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        return cls(
            d["asset_id"],
            (float(d["translation"][0]), float(d["translation"][1])),
            float(d["rotation"]),
            (float(d["scale"][0]), float(d["scale"][1])),
        )


@dataclass
class AssembledScene:
    placements: list

    def to_dict(self) -> dict:
        return {"placements": [p.to_dict() for p in self.placements]}

    @classmethod
    def from_dict(cls, d: dict) -> "AssembledScene":
        return cls([Placement.from_dict(p) for p in d.get("placements", [])])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "AssembledScene":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def apply_placement(placement: Placement, entry: AssetEntry) -> np.ndarray:
    """World-frame footprint corners of a placed asset (CCW)."""
    w, d = entry.dims
    corners = np.array(
        [[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]], dtype=np.float64
    )
    corners = corners * np.array(placement.scale)
    rad = math.radians(placement.rotation)
    rot = np.array([[math.cos(rad), -math.sin(rad)], [math.sin(rad), math.cos(rad)]])
    return corners @ rot.T + np.array(placement.translation)


def assemble(layout: Layout, thetas: dict, catalog: AssetCatalog) -> AssembledScene:
    """Retrieve an asset for every object, resolve its facing, and compute
    the placement transform that reproduces the predicted oriented box."""
    placements = []
    for obj in layout.objects:
        if obj.id not in thetas:
            raise SceneForgeError(f"no predicted theta for object {obj.id}")
        obb = OrientedBox.from_aabb(obj.box, thetas[obj.id])
        entry, swapped = retrieve(obb, obj.category, catalog)
        hx, hy = obb.half_extents
        if swapped:
            # the same box, described with swapped extents and a +90 axis
            effective = OrientedBox(obb.center, (hy, hx), (obb.theta + 90.0) % 180.0)
            scale = (2.0 * hy / entry.dims[0], 2.0 * hx / entry.dims[1])
        else:
            effective = obb
            scale = (2.0 * hx / entry.dims[0], 2.0 * hy / entry.dims[1])
        region = region_boundary(obj, layout)
        heading = resolve_facing(effective, region, entry.front)
        rotation = (heading - entry.front) % 360.0
        placements.append(Placement(entry.asset_id, obb.center, rotation, scale))
    return AssembledScene(placements)
