"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The three kernels here (rotation sweep, pairwise box IoU, convex polygon
IoU) sit in the inner loops of orientation extraction, layout verification
and pose metrics, and are called thousands of times per corpus pass.

Set ``SCENEFORGE_NO_NUMBA=1`` to force the pure-numpy path (also used
automatically when numba is not importable). ``benchmarks/bench_kernels.py``
compares the two paths.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DEG = np.arange(180, dtype=np.float64)
_COS = np.cos(np.deg2rad(_DEG))
_SIN = np.sin(np.deg2rad(_DEG))


def numba_disabled_by_env() -> bool:
    return os.environ.get("SCENEFORGE_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def sweep_areas_numpy(points: np.ndarray) -> np.ndarray:
    """Bounding-box area of ``points`` rotated by -theta, theta = 0..179 deg."""
    x = points[:, 0]
    y = points[:, 1]
    # rotation by -theta: xr = cos*x + sin*y (broadcast over all 180 angles)
    xr = _COS[:, None] * x[None, :] + _SIN[:, None] * y[None, :]
    yr = -_SIN[:, None] * x[None, :] + _COS[:, None] * y[None, :]
    w = xr.max(axis=1) - xr.min(axis=1)
    h = yr.max(axis=1) - yr.min(axis=1)
    return w * h


def iou_matrix_numpy(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of axis-aligned boxes given as (x0, y0, x1, y1) rows."""
    area_a = (boxes_a[:, 2] - boxes_a[:, 0]) * (boxes_a[:, 3] - boxes_a[:, 1])
    area_b = (boxes_b[:, 2] - boxes_b[:, 0]) * (boxes_b[:, 3] - boxes_b[:, 1])
    x0 = np.maximum(boxes_a[:, None, 0], boxes_b[None, :, 0])
    y0 = np.maximum(boxes_a[:, None, 1], boxes_b[None, :, 1])
    x1 = np.minimum(boxes_a[:, None, 2], boxes_b[None, :, 2])
    y1 = np.minimum(boxes_a[:, None, 3], boxes_b[None, :, 3])
    inter = np.clip(x1 - x0, 0.0, None) * np.clip(y1 - y0, 0.0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def _clip_against_edge(poly, n, ex0, ey0, ex1, ey1, out):
    """Clip a convex polygon against one directed edge (Sutherland-Hodgman)."""
    m = 0
    ax = ex1 - ex0
    ay = ey1 - ey0
    for i in range(n):
        px, py = poly[i, 0], poly[i, 1]
        qx, qy = poly[(i + 1) % n, 0], poly[(i + 1) % n, 1]
        side_p = ax * (py - ey0) - ay * (px - ex0)
        side_q = ax * (qy - ey0) - ay * (qx - ex0)
        if side_p >= 0.0:
            out[m, 0] = px
            out[m, 1] = py
            m += 1
        if (side_p > 0.0 and side_q < 0.0) or (side_p < 0.0 and side_q > 0.0):
            t = side_p / (side_p - side_q)
            out[m, 0] = px + t * (qx - px)
            out[m, 1] = py + t * (qy - py)
            m += 1
    return m


def convex_clip_area_numpy(subject: np.ndarray, clip: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons."""
    poly = np.empty((16, 2), dtype=np.float64)
    scratch = np.empty((16, 2), dtype=np.float64)
    n = subject.shape[0]
    poly[:n] = subject
    k = clip.shape[0]
    for e in range(k):
        ex0, ey0 = clip[e, 0], clip[e, 1]
        ex1, ey1 = clip[(e + 1) % k, 0], clip[(e + 1) % k, 1]
        n = _clip_against_edge(poly, n, ex0, ey0, ex1, ey1, scratch)
        if n == 0:
            return 0.0
        poly, scratch = scratch, poly
    area = 0.0
    for i in range(n):
        x0, y0 = poly[i, 0], poly[i, 1]
        x1, y1 = poly[(i + 1) % n, 0], poly[(i + 1) % n, 1]
        area += x0 * y1 - x1 * y0
    return 0.5 * abs(area)


def polygon_area_numpy(poly: np.ndarray) -> float:
    x = poly[:, 0]
    y = poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def obb_pair_iou_numpy(corners_a: np.ndarray, corners_b: np.ndarray) -> float:
    inter = convex_clip_area_numpy(corners_a, corners_b)
    union = polygon_area_numpy(corners_a) + polygon_area_numpy(corners_b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

try:  # pragma: no cover - import guard
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False


if HAS_NUMBA:

    @numba.njit(cache=True)
    def sweep_areas_numba(points):  # pragma: no cover - measured via dispatch tests
        n = points.shape[0]
        areas = np.empty(180, dtype=np.float64)
        for t in range(180):
            rad = t * (math.pi / 180.0)
            c = math.cos(rad)
            s = math.sin(rad)
            xmin = ymin = np.inf
            xmax = ymax = -np.inf
            for i in range(n):
                xr = c * points[i, 0] + s * points[i, 1]
                yr = -s * points[i, 0] + c * points[i, 1]
                if xr < xmin:
                    xmin = xr
                if xr > xmax:
                    xmax = xr
                if yr < ymin:
                    ymin = yr
                if yr > ymax:
                    ymax = yr
            areas[t] = (xmax - xmin) * (ymax - ymin)
        return areas

    @numba.njit(cache=True)
    def iou_matrix_numba(boxes_a, boxes_b):  # pragma: no cover
        n = boxes_a.shape[0]
        m = boxes_b.shape[0]
        out = np.zeros((n, m), dtype=np.float64)
        for i in range(n):
            ax0, ay0, ax1, ay1 = boxes_a[i, 0], boxes_a[i, 1], boxes_a[i, 2], boxes_a[i, 3]
            area_a = (ax1 - ax0) * (ay1 - ay0)
            for j in range(m):
                bx0, by0, bx1, by1 = boxes_b[j, 0], boxes_b[j, 1], boxes_b[j, 2], boxes_b[j, 3]
                iw = min(ax1, bx1) - max(ax0, bx0)
                if iw <= 0.0:
                    continue
                ih = min(ay1, by1) - max(ay0, by0)
                if ih <= 0.0:
                    continue
                inter = iw * ih
                union = area_a + (bx1 - bx0) * (by1 - by0) - inter
                if union > 0.0:
                    out[i, j] = inter / union
        return out

    @numba.njit(cache=True)
    def _clip_area_numba(subject, clip):  # pragma: no cover
        poly = np.empty((16, 2), dtype=np.float64)
        scratch = np.empty((16, 2), dtype=np.float64)
        n = subject.shape[0]
        for i in range(n):
            poly[i, 0] = subject[i, 0]
            poly[i, 1] = subject[i, 1]
        k = clip.shape[0]
        for e in range(k):
            ex0 = clip[e, 0]
            ey0 = clip[e, 1]
            ex1 = clip[(e + 1) % k, 0]
            ey1 = clip[(e + 1) % k, 1]
            ax = ex1 - ex0
            ay = ey1 - ey0
            m = 0
            for i in range(n):
                px = poly[i, 0]
                py = poly[i, 1]
                qx = poly[(i + 1) % n, 0]
                qy = poly[(i + 1) % n, 1]
                side_p = ax * (py - ey0) - ay * (px - ex0)
                side_q = ax * (qy - ey0) - ay * (qx - ex0)
                if side_p >= 0.0:
                    scratch[m, 0] = px
                    scratch[m, 1] = py
                    m += 1
                if (side_p > 0.0 and side_q < 0.0) or (side_p < 0.0 and side_q > 0.0):
                    t = side_p / (side_p - side_q)
                    scratch[m, 0] = px + t * (qx - px)
                    scratch[m, 1] = py + t * (qy - py)
                    m += 1
            if m == 0:
                return 0.0
            for i in range(m):
                poly[i, 0] = scratch[i, 0]
                poly[i, 1] = scratch[i, 1]
            n = m
        area = 0.0
        for i in range(n):
            x0 = poly[i, 0]
            y0 = poly[i, 1]
            x1 = poly[(i + 1) % n, 0]
            y1 = poly[(i + 1) % n, 1]
            area += x0 * y1 - x1 * y0
        return 0.5 * abs(area)

    @numba.njit(cache=True)
    def obb_pair_iou_numba(corners_a, corners_b):  # pragma: no cover
        inter = _clip_area_numba(corners_a, corners_b)
        area_a = 0.0
        area_b = 0.0
        na = corners_a.shape[0]
        nb = corners_b.shape[0]
        for i in range(na):
            j = (i + 1) % na
            area_a += corners_a[i, 0] * corners_a[j, 1] - corners_a[j, 0] * corners_a[i, 1]
        for i in range(nb):
            j = (i + 1) % nb
            area_b += corners_b[i, 0] * corners_b[j, 1] - corners_b[j, 0] * corners_b[i, 1]
        union = 0.5 * abs(area_a) + 0.5 * abs(area_b) - inter
        if union <= 0.0:
            return 0.0
        return inter / union
else:  # pragma: no cover
    sweep_areas_numba = None
    iou_matrix_numba = None
    obb_pair_iou_numba = None


USE_NUMBA = HAS_NUMBA and not numba_disabled_by_env()

if USE_NUMBA:
    sweep_areas = sweep_areas_numba
    iou_matrix = iou_matrix_numba
    obb_pair_iou = obb_pair_iou_numba
else:
    sweep_areas = sweep_areas_numpy
    iou_matrix = iou_matrix_numpy
    obb_pair_iou = obb_pair_iou_numpy
