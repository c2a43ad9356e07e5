"""Equivalence of the numba and pure-numpy kernel paths, with shapely as the
independent polygon oracle."""

import numpy as np
import pytest

from sceneforge import _kernels

pytestmark = pytest.mark.skipif(
    not _kernels.HAS_NUMBA, reason="numba unavailable; only one path to test"
)


def random_boxes(rng, n):
    lo = rng.uniform(-10, 10, (n, 2))
    wh = rng.uniform(0.1, 5.0, (n, 2))
    return np.hstack([lo, lo + wh])


def test_sweep_areas_paths_agree():
    rng = np.random.default_rng(0)
    for _ in range(20):
        pts = rng.uniform(-5, 5, (rng.integers(3, 40), 2))
        a = _kernels.sweep_areas_numpy(pts)
        b = _kernels.sweep_areas_numba(pts)
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_iou_matrix_paths_agree():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = random_boxes(rng, int(rng.integers(1, 30)))
        b = random_boxes(rng, int(rng.integers(1, 30)))
        np.testing.assert_allclose(
            _kernels.iou_matrix_numpy(a, b), _kernels.iou_matrix_numba(a, b), rtol=1e-12
        )


def rotated_rect(rng):
    w, h = rng.uniform(0.5, 3.0, 2)
    theta = rng.uniform(0, np.pi)
    c, s = np.cos(theta), np.sin(theta)
    local = np.array([[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + rng.uniform(-2, 2, 2)


def test_obb_iou_paths_agree_and_match_shapely():
    shapely = pytest.importorskip("shapely")
    from shapely.geometry import Polygon

    rng = np.random.default_rng(2)
    for _ in range(50):
        a = rotated_rect(rng)
        b = rotated_rect(rng)
        got_np = _kernels.obb_pair_iou_numpy(a, b)
        got_nb = _kernels.obb_pair_iou_numba(a, b)
        pa, pb = Polygon(a), Polygon(b)
        inter = pa.intersection(pb).area
        union = pa.area + pb.area - inter
        want = inter / union if union > 0 else 0.0
        assert got_np == pytest.approx(want, abs=1e-9)
        assert got_nb == pytest.approx(want, abs=1e-9)


def test_env_flag_selects_numpy(monkeypatch):
    monkeypatch.setenv("SCENEFORGE_NO_NUMBA", "1")
    assert _kernels.numba_disabled_by_env()
    monkeypatch.setenv("SCENEFORGE_NO_NUMBA", "")
    assert not _kernels.numba_disabled_by_env()
