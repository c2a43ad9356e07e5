"""2D geometric primitives: boxes, IoU, walls, orientation bins and the
tightest-rotated-box orientation extractor.

All angles are degrees. Box/footprint orientations live on [0, 180) because
a rectangle is symmetric under a half turn; they are reduced modulo 180 at
type boundaries. Coordinates are meters in the world frame, +y up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateGeometryError

N_ORIENTATION_BINS = 36
BIN_DEGREES = 5.0


def reduce_angle(theta: float) -> float:
    """Reduce an angle in degrees to [0, 180)."""
    r = float(theta) % 180.0
    if r >= 180.0:  # guard against fp wrap of tiny negatives
        r = 0.0
    return r


def theta_to_bin(theta: float) -> int:
    """Discretize an orientation into one of 36 classes of 5 degrees."""
    if not math.isfinite(theta):
        raise DegenerateGeometryError(f"non-finite angle: {theta!r}")
    r = reduce_angle(theta)
    return min(int(r // BIN_DEGREES), N_ORIENTATION_BINS - 1)


def bin_to_theta(index: int) -> float:
    """Representative angle (lower edge) of an orientation bin."""
    if not 0 <= index < N_ORIENTATION_BINS:
        raise DegenerateGeometryError(f"orientation bin out of range: {index}")
    return BIN_DEGREES * index


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box stored as (x_min, y_min, x_max, y_max)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise DegenerateGeometryError(f"non-finite box: {coords}")
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DegenerateGeometryError(f"inverted box: {coords}")

    @classmethod
    def from_center(cls, cx: float, cy: float, width: float, height: float) -> "Aabb":
        return cls(cx - width / 2.0, cy - height / 2.0, cx + width / 2.0, cy + height / 2.0)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def translated(self, dx: float, dy: float) -> "Aabb":
        return Aabb(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )

    def contains_point(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def corners(self) -> np.ndarray:
        """Corner coordinates in CCW order, shape (4, 2)."""
        return np.array(
            [
                [self.x_min, self.y_min],
                [self.x_max, self.y_min],
                [self.x_max, self.y_max],
                [self.x_min, self.y_max],
            ],
            dtype=np.float64,
        )

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def iou(a: Aabb, b: Aabb) -> float:
    """Intersection over union of two axis-aligned boxes.

    Zero-area boxes are permitted: against anything with positive area they
    score 0; two identical degenerate boxes score 1 by convention.
    """
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    inter = max(ix, 0.0) * max(iy, 0.0)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 1.0 if a == b else 0.0
    return inter / union


@dataclass(frozen=True)
class OrientedBox:
    """An Aabb rotated by ``theta`` degrees about its center."""

    center: tuple[float, float]
    half_extents: tuple[float, float]
    theta: float

    def __post_init__(self):
        hx, hy = self.half_extents
        if hx <= 0.0 or hy <= 0.0:
            raise DegenerateGeometryError(f"non-positive half extents: {self.half_extents}")
        if not (0.0 <= self.theta < 180.0):
            raise DegenerateGeometryError(f"theta out of [0, 180): {self.theta}")

    @classmethod
    def from_aabb(cls, box: Aabb, theta: float) -> "OrientedBox":
        return cls(box.center, (box.width / 2.0, box.height / 2.0), reduce_angle(theta))

    @property
    def aspect_ratio(self) -> float:
        hx, hy = self.half_extents
        return max(hx, hy) / min(hx, hy)

    def corners(self) -> np.ndarray:
        """World-frame corner coordinates in CCW order, shape (4, 2)."""
        cx, cy = self.center
        hx, hy = self.half_extents
        rad = math.radians(self.theta)
        c, s = math.cos(rad), math.sin(rad)
        local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]], dtype=np.float64)
        rot = np.array([[c, -s], [s, c]], dtype=np.float64)
        return local @ rot.T + np.array([cx, cy])


def oriented_iou(a: OrientedBox, b: OrientedBox) -> float:
    """IoU of two oriented footprints via convex polygon clipping."""
    return float(_kernels.obb_pair_iou(a.corners(), b.corners()))


@dataclass(frozen=True)
class Wall:
    """A wall segment; orientation is derived from the endpoints."""

    p1: tuple[float, float]
    p2: tuple[float, float]

    def __post_init__(self):
        if self.p1 == self.p2:
            raise DegenerateGeometryError(f"zero-length wall at {self.p1}")

    @property
    def orientation(self) -> float:
        dx = self.p2[0] - self.p1[0]
        dy = self.p2[1] - self.p1[1]
        return reduce_angle(math.degrees(math.atan2(dy, dx)))

    def features(self) -> np.ndarray:
        """Encoder features: both endpoints plus the orientation."""
        return np.array(
            [self.p1[0], self.p1[1], self.p2[0], self.p2[1], self.orientation / 180.0],
            dtype=np.float64,
        )


def point_segment_distance(point: tuple[float, float], p1: tuple[float, float], p2: tuple[float, float]) -> float:
    px, py = point
    x1, y1 = p1
    x2, y2 = p2
    dx, dy = x2 - x1, y2 - y1
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        return math.hypot(px - x1, py - y1)
    t = ((px - x1) * dx + (py - y1) * dy) / seg_sq
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (x1 + t * dx), py - (y1 + t * dy))


def nearest_wall(center: tuple[float, float], walls: list[Wall]) -> tuple[Wall, float]:
    """Wall minimizing point-to-segment distance; ties go to list order."""
    if not walls:
        raise DegenerateGeometryError("nearest_wall requires a non-empty wall list")
    best = walls[0]
    best_d = point_segment_distance(center, best.p1, best.p2)
    for wall in walls[1:]:
        d = point_segment_distance(center, wall.p1, wall.p2)
        if d < best_d:
            best, best_d = wall, d
    return best, best_d


def rotate_points(points: np.ndarray, degrees: float) -> np.ndarray:
    rad = math.radians(degrees)
    c, s = math.cos(rad), math.sin(rad)
    rot = np.array([[c, -s], [s, c]], dtype=np.float64)
    return np.asarray(points, dtype=np.float64) @ rot.T


def _collinear(points: np.ndarray) -> bool:
    p0 = points[0]
    d = points - p0
    cross = d[:, 0, None] * d[None, :, 1] - d[:, 1, None] * d[None, :, 0]
    span = max(float(np.abs(d).max()), 1.0)
    return bool(np.abs(cross).max() < 1e-12 * span * span)


def min_area_orientation(points) -> tuple[float, OrientedBox]:
    """Sweep theta over {0, 1, ..., 179} degrees and return the angle whose
    de-rotated bounding box has minimal area, plus that oriented box.

    Any point set ties at theta and theta+90 (the box dimensions swap), so
    ties prefer the long-axis reading (de-rotated width >= height) and then
    the smallest theta; a square footprint therefore resolves purely by
    smallest theta. The 1-degree step is finer than the 5-degree label bins,
    so labeling error is bounded by binning, not the sweep.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise DegenerateGeometryError("min_area_orientation needs at least 3 points")
    if not np.isfinite(pts).all():
        raise DegenerateGeometryError("non-finite point coordinates")
    if _collinear(pts):
        raise DegenerateGeometryError("points are collinear")

    areas = np.asarray(_kernels.sweep_areas(pts))
    amin = float(areas.min())
    tol = amin * 1e-12 + 1e-15
    candidates = np.flatnonzero(areas <= amin + tol)

    def extents(theta: int):
        rotated = rotate_points(pts, -float(theta))
        lo = rotated.min(axis=0)
        hi = rotated.max(axis=0)
        return rotated, lo, hi

    theta = None
    for cand in candidates:
        _, lo, hi = extents(int(cand))
        if hi[0] - lo[0] >= hi[1] - lo[1] - 1e-12:
            theta = int(cand)
            break
    if theta is None:
        theta = int(candidates[0])

    rotated, lo, hi = extents(theta)
    center_local = (lo + hi) / 2.0
    cx, cy = rotate_points(center_local[None, :], theta)[0]
    box = OrientedBox(
        (float(cx), float(cy)), ((hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0), float(theta)
    )
    return float(theta), box
