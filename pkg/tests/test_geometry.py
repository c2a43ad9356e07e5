import math

import numpy as np
import pytest

from sceneforge.errors import DegenerateGeometryError
from sceneforge.geometry import (
    Aabb,
    OrientedBox,
    Wall,
    bin_to_theta,
    iou,
    min_area_orientation,
    nearest_wall,
    oriented_iou,
    rotate_points,
    theta_to_bin,
)


def rect_corners(w, h, cx=0.0, cy=0.0):
    return np.array(
        [[-w / 2, -h / 2], [w / 2, -h / 2], [w / 2, h / 2], [-w / 2, h / 2]]
    ) + np.array([cx, cy])


class TestIou:
    def test_identity(self):
        a = Aabb(0, 0, 2, 2)
        assert iou(a, a) == 1.0

    def test_disjoint(self):
        assert iou(Aabb(0, 0, 1, 1), Aabb(5, 5, 6, 6)) == 0.0

    def test_one_third(self):
        # intersection 1x2=2, union 4+4-2=6, by direct arithmetic
        assert iou(Aabb(0, 0, 2, 2), Aabb(1, 0, 3, 2)) == pytest.approx(1 / 3, abs=1e-15)

    def test_degenerate_boxes(self):
        point = Aabb(1, 1, 1, 1)
        assert iou(point, point) == 1.0
        assert iou(point, Aabb(2, 2, 2, 2)) == 0.0
        assert iou(point, Aabb(0, 0, 2, 2)) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            x0, y0, x1, y1 = rng.uniform(-5, 5, 4)
            a = Aabb(min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))
            u0, v0, u1, v1 = rng.uniform(-5, 5, 4)
            b = Aabb(min(u0, u1), min(v0, v1), max(u0, u1), max(v0, v1))
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0


class TestMinAreaOrientation:
    def test_axis_aligned(self):
        theta, box = min_area_orientation(rect_corners(2, 1))
        assert theta == 0.0
        assert box.half_extents == pytest.approx((1.0, 0.5))

    def test_rotated_30(self):
        theta, _ = min_area_orientation(rotate_points(rect_corners(2, 1), 30.0))
        assert theta == 30.0

    def test_square_tie_breaks_low(self):
        # a square rotated 45 degrees ties at 45 and 135; smallest theta wins
        theta, _ = min_area_orientation(rotate_points(rect_corners(1, 1), 45.0))
        assert theta == 45.0

    def test_recovery_within_one_degree(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            w = rng.uniform(1.0, 3.0)
            h = w / rng.uniform(1.2, 3.0)
            phi = rng.uniform(0.0, 180.0)
            theta, _ = min_area_orientation(rotate_points(rect_corners(w, h), phi))
            d = abs(theta - (phi % 180.0))
            assert min(d, 180.0 - d) <= 1.0 + 1e-9

    def test_shift_scale_equivariance(self):
        rng = np.random.default_rng(3)
        pts = rotate_points(rect_corners(2, 1), 63.0)
        theta0, _ = min_area_orientation(pts)
        for _ in range(20):
            dx, dy = rng.uniform(-10, 10, 2)
            s = rng.uniform(0.1, 5.0)
            theta1, _ = min_area_orientation(pts * s + np.array([dx, dy]))
            assert theta1 == theta0

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateGeometryError):
            min_area_orientation([(0, 0), (1, 1)])
        with pytest.raises(DegenerateGeometryError):
            min_area_orientation([(0, 0), (1, 1), (2, 2), (3, 3)])


class TestBins:
    @pytest.mark.parametrize("theta,expected", [(0.0, 0), (7.5, 1), (184.0, 0), (179.9, 35), (-1.0, 35)])
    def test_theta_to_bin(self, theta, expected):
        assert theta_to_bin(theta) == expected

    def test_roundtrip_identity(self):
        for k in range(36):
            assert theta_to_bin(bin_to_theta(k)) == k

    def test_non_finite_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            theta_to_bin(float("nan"))


class TestWalls:
    def test_nearest_vertical(self):
        vertical = Wall((1, -10), (1, 10))
        horizontal = Wall((-10, 5), (10, 5))
        wall, dist = nearest_wall((0, 0), [vertical, horizontal])
        assert wall is vertical
        assert dist == pytest.approx(1.0)

    def test_center_on_wall(self):
        wall = Wall((0, 0), (4, 0))
        found, dist = nearest_wall((2, 0), [wall])
        assert found is wall
        assert dist == 0.0

    def test_tie_goes_to_first(self):
        a = Wall((1, -1), (1, 1))
        b = Wall((-1, -1), (-1, 1))
        found, _ = nearest_wall((0, 0), [a, b])
        assert found is a

    def test_orientation_derived(self):
        assert Wall((0, 0), (1, 1)).orientation == pytest.approx(45.0)
        assert Wall((0, 0), (-1, -1)).orientation == pytest.approx(45.0)
        with pytest.raises(DegenerateGeometryError):
            Wall((1, 1), (1, 1))

    def test_empty_list_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            nearest_wall((0, 0), [])


class TestOrientedBox:
    def test_validation(self):
        with pytest.raises(DegenerateGeometryError):
            OrientedBox((0, 0), (0.0, 1.0), 10.0)
        with pytest.raises(DegenerateGeometryError):
            OrientedBox((0, 0), (1.0, 1.0), 180.0)

    def test_oriented_iou_identity_and_rotation(self):
        box = OrientedBox.from_aabb(Aabb(0, 0, 2, 1), 30.0)
        assert oriented_iou(box, box) == pytest.approx(1.0)
        other = OrientedBox.from_aabb(Aabb(0, 0, 2, 1), 120.0)
        assert 0.0 < oriented_iou(box, other) < 1.0
