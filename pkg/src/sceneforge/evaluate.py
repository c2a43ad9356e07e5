"""Rendering and distributional metrics for layouts.

The paper-image metrics (FID/KID over pretrained networks) are out of scope
here; corpus-level comparison uses a squared-MMD estimate over geometric
layout features instead. The numbers are not comparable to image-metric
tables.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SceneForgeError
from .geometry import N_ORIENTATION_BINS, OrientedBox, theta_to_bin
from .interp import Layout
from .library import description_length, funcs_per_program

PAPER_CATEGORIES = (
    "armchair",
    "bed",
    "bookshelf",
    "cabinet",
    "chair",
    "coffee_table",
    "couch",
    "desk",
    "dresser",
    "lamp",
    "nightstand",
    "shelf",
    "stool",
    "table",
)

# one fixed color per category so renders are stable across versions
PALETTE = {
    "armchair": "#e6194b",
    "bed": "#3cb44b",
    "bookshelf": "#ffe119",
    "cabinet": "#4363d8",
    "chair": "#f58231",
    "coffee_table": "#911eb4",
    "couch": "#46f0f0",
    "desk": "#f032e6",
    "dresser": "#bcf60c",
    "lamp": "#fabebe",
    "nightstand": "#008080",
    "shelf": "#e6beff",
    "stool": "#9a6324",
    "table": "#800000",
}
OTHER_COLOR = "#808080"


def _fmt(value: float) -> str:
    return f"{float(value):.9g}"


def render_svg(layout: Layout, thetas: dict | None = None) -> bytes:
    """Deterministic SVG: room outline, one filled (optionally rotated)
    rectangle per object in its category color, legend appended. Identical
    input produces byte-identical output."""
    bounds = layout.room_bounds
    x0, y0, x1, y1 = bounds.x_min, bounds.y_min, bounds.x_max, bounds.y_max
    for o in layout.objects:
        x0, y0 = min(x0, o.box.x_min), min(y0, o.box.y_min)
        x1, y1 = max(x1, o.box.x_max), max(y1, o.box.y_max)
    pad = 0.5
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    scale = 640.0 / max(x1 - x0, 1e-9)
    height = (y1 - y0) * scale

    def sx(x):
        return _fmt((x - x0) * scale)

    def sy(y):
        return _fmt((y1 - y) * scale)

    categories = sorted({o.category for o in layout.objects})
    legend_h = 22.0 * len(categories) + 10.0 if categories else 0.0
    total_h = _fmt(height + legend_h)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="640" height="{total_h}" '
        f'viewBox="0 0 640 {total_h}">\n',
        f'<rect x="0" y="0" width="640" height="{total_h}" fill="#ffffff"/>\n',
        f'<rect x="{sx(bounds.x_min)}" y="{sy(bounds.y_max)}" '
        f'width="{_fmt(bounds.width * scale)}" height="{_fmt(bounds.height * scale)}" '
        f'fill="none" stroke="#000000" stroke-width="2"/>\n',
    ]
    for o in layout.objects:
        color = PALETTE.get(o.category, OTHER_COLOR)
        theta = (thetas or {}).get(o.id, 0.0)
        if theta and o.box.area > 0.0:
            corners = OrientedBox.from_aabb(o.box, theta).corners()
        else:
            corners = o.box.corners()
        points = " ".join(f"{sx(px)},{sy(py)}" for px, py in corners)
        parts.append(
            f'<polygon points="{points}" fill="{color}" fill-opacity="0.8" '
            f'stroke="#333333" stroke-width="1"/>\n'
        )
    for i, cat in enumerate(categories):
        color = PALETTE.get(cat, OTHER_COLOR)
        ly = _fmt(height + 10.0 + 22.0 * i)
        ty = _fmt(height + 22.0 + 22.0 * i)
        parts.append(f'<rect x="10" y="{ly}" width="16" height="16" fill="{color}"/>\n')
        parts.append(f'<text x="32" y="{ty}" font-family="monospace" font-size="14">{cat}</text>\n')
    parts.append("</svg>\n")
    return "".join(parts).encode("utf-8")


@dataclass
class LayoutFeatures:
    category_hist: np.ndarray  # 14 paper categories + 1 "other" bucket
    nn_mean: float
    nn_std: float
    bin_hist: np.ndarray  # 36 orientation bins
    count: int
    mean_area: float

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.category_hist,
                [self.nn_mean, self.nn_std],
                self.bin_hist,
                [float(self.count), self.mean_area],
            ]
        )


def layout_features(layout: Layout, thetas: dict | None = None) -> LayoutFeatures:
    cat_hist = np.zeros(len(PAPER_CATEGORIES) + 1, dtype=np.float64)
    index = {c: i for i, c in enumerate(PAPER_CATEGORIES)}
    for o in layout.objects:
        cat_hist[index.get(o.category, len(PAPER_CATEGORIES))] += 1.0
    bin_hist = np.zeros(N_ORIENTATION_BINS, dtype=np.float64)
    for o in layout.objects:
        bin_hist[theta_to_bin((thetas or {}).get(o.id, 0.0))] += 1.0
    centers = np.array([o.box.center for o in layout.objects], dtype=np.float64)
    if len(centers) >= 2:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        nn = dist.min(axis=1)
        nn_mean, nn_std = float(nn.mean()), float(nn.std())
    else:
        nn_mean = nn_std = 0.0
    areas = [o.box.area for o in layout.objects]
    return LayoutFeatures(
        category_hist=cat_hist,
        nn_mean=nn_mean,
        nn_std=nn_std,
        bin_hist=bin_hist,
        count=len(layout.objects),
        mean_area=float(np.mean(areas)) if areas else 0.0,
    )


def _rbf(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    d2 = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=-1)
    return np.exp(-d2 / (2.0 * bandwidth * bandwidth))


def mmd(set_a: list, set_b: list, bandwidth: float | None = None) -> float:
    """Unbiased squared-MMD estimate with an RBF kernel on z-scored feature
    vectors (statistics from the union of both sets; bandwidth from the
    median heuristic when unset).

    For equal sample sizes the paired U-statistic is used, so identical sets
    score exactly 0."""
    if len(set_a) < 2 or len(set_b) < 2:
        raise SceneForgeError("mmd requires at least 2 elements per set")
    x = np.stack([f.vector() for f in set_a])
    y = np.stack([f.vector() for f in set_b])
    pooled = np.concatenate([x, y])
    mean = pooled.mean(axis=0)
    std = pooled.std(axis=0)
    std[std == 0.0] = 1.0
    x = (x - mean) / std
    y = (y - mean) / std
    if bandwidth is None:
        z = np.concatenate([x, y])
        d2 = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=-1)
        upper = d2[np.triu_indices(len(z), k=1)]
        med = float(np.median(upper)) if len(upper) else 0.0
        bandwidth = np.sqrt(med) if med > 0.0 else 1.0
    m, n = len(x), len(y)
    kxx = _rbf(x, x, bandwidth)
    kyy = _rbf(y, y, bandwidth)
    kxy = _rbf(x, y, bandwidth)
    if m == n:
        # Gretton-style paired U-statistic: exact 0 for identical sets
        h = kxx + kyy - kxy - kxy.T
        np.fill_diagonal(h, 0.0)
        return float(h.sum() / (m * (m - 1)))
    sum_xx = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    sum_yy = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    return float(sum_xx + sum_yy - 2.0 * kxy.mean())


def eval_report(generated: list, reference: list) -> dict:
    """Bundle MMD, program statistics and per-category count distributions
    for two corpora of (layout, thetas, program) triples."""

    def side(items):
        layouts = [t[0] for t in items]
        thetas = [t[1] for t in items]
        programs = [t[2] for t in items if t[2] is not None]
        feats = [layout_features(l, th) for l, th in zip(layouts, thetas)]
        cat_counts = {c: 0.0 for c in PAPER_CATEGORIES}
        cat_counts["other"] = 0.0
        for f in feats:
            for c, v in zip(PAPER_CATEGORIES, f.category_hist):
                cat_counts[c] += float(v)
            cat_counts["other"] += float(f.category_hist[-1])
        for c in cat_counts:
            cat_counts[c] /= max(len(items), 1)
        stats = {
            "count": len(items),
            "category_counts": cat_counts,
            "funcs_per_program": funcs_per_program(programs) if programs else None,
            "mean_description_length": (
                float(np.mean([description_length(p) for p in programs])) if programs else None
            ),
        }
        return feats, stats

    if not generated or not reference:
        raise SceneForgeError("eval_report requires non-empty corpora")
    gen_feats, gen_stats = side(generated)
    ref_feats, ref_stats = side(reference)
    divergence = {
        c: abs(gen_stats["category_counts"][c] - ref_stats["category_counts"][c])
        for c in gen_stats["category_counts"]
    }
    largest = max(sorted(divergence), key=lambda c: divergence[c])
    report = {
        "schema": 1,
        "mmd": mmd(gen_feats, ref_feats) if len(gen_feats) >= 2 and len(ref_feats) >= 2 else None,
        "generated": gen_stats,
        "reference": ref_stats,
        "category_count_divergence": divergence,
        "largest_divergence_category": largest,
    }
    return report


def report_panel_svg(report: dict) -> bytes:
    """Bar-chart panel of per-category mean counts for both corpora."""
    cats = list(PAPER_CATEGORIES) + ["other"]
    gen = report["generated"]["category_counts"]
    ref = report["reference"]["category_counts"]
    peak = max([gen[c] for c in cats] + [ref[c] for c in cats] + [1e-9])
    bar_w, gap, h = 18, 14, 160
    width = len(cats) * (2 * bar_w + gap) + gap
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{h + 90}" '
        f'viewBox="0 0 {width} {h + 90}">\n',
        f'<rect x="0" y="0" width="{width}" height="{h + 90}" fill="#ffffff"/>\n',
    ]
    for i, cat in enumerate(cats):
        x = gap + i * (2 * bar_w + gap)
        for j, (value, fill) in enumerate(((gen[cat], "#1f77b4"), (ref[cat], "#ff7f0e"))):
            bh = h * value / peak
            parts.append(
                f'<rect x="{_fmt(x + j * bar_w)}" y="{_fmt(10 + h - bh)}" width="{bar_w}" '
                f'height="{_fmt(bh)}" fill="{fill}"/>\n'
            )
        parts.append(
            f'<text x="{_fmt(x + bar_w)}" y="{h + 24}" font-family="monospace" font-size="9" '
            f'text-anchor="middle" transform="rotate(45 {_fmt(x + bar_w)} {h + 24})">{cat}</text>\n'
        )
    parts.append(
        f'<text x="{gap}" y="{h + 70}" font-family="monospace" font-size="12">'
        "generated (blue) vs reference (orange), mean objects per layout</text>\n"
    )
    parts.append("</svg>\n")
    return "".join(parts).encode("utf-8")


def dump_json(obj, indent: int = 2) -> str:
    """JSON with sorted keys and 9-significant-digit floats, for diffability."""

    def walk(v):
        if isinstance(v, float):
            return float(f"{v:.9g}")
        if isinstance(v, dict):
            return {k: walk(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [walk(x) for x in v]
        if isinstance(v, np.ndarray):
            return [walk(x) for x in v.tolist()]
        if isinstance(v, (np.floating, np.integer)):
            return walk(v.item())
        return v

    return json.dumps(walk(obj), indent=indent, sort_keys=True) + "\n"
