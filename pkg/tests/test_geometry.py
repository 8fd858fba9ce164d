import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from anthrolayout.geometry import (OrientedFootprint, Pose, Room, bounding_circle_radius, front_direction,
                                   intersection_area, normalize_yaw, overlap_ratio, penetration_depth,
                                   wall_back_yaw, wall_distance)

from oracles import intersection_area_oracle, penetration_oracle

coord = st.floats(-3.0, 3.0, allow_nan=False)
half = st.floats(0.05, 1.5, allow_nan=False)
angle = st.floats(-10.0, 10.0, allow_nan=False)
boxes = st.tuples(coord, coord, angle, half, half)


def fp(x, y, yaw, hw, hd):
    return OrientedFootprint((x, y), hw, hd, yaw)


def test_pose_normalizes_yaw():
    assert Pose(0, 0, -math.pi / 2).yaw == pytest.approx(1.5 * math.pi)
    assert Pose(0, 0, 2 * math.pi).yaw == 0.0
    assert 0.0 <= normalize_yaw(-1e-18) < 2 * math.pi


def test_pose_rejects_non_finite():
    with pytest.raises(ValueError):
        Pose(float("nan"), 0.0)


def test_room_must_be_positive():
    with pytest.raises(ValueError):
        Room(0.0, 3.0)


def test_corners_counterclockwise():
    c = fp(1.0, 2.0, 0.3, 0.5, 0.25).corners()
    assert c.shape == (4, 2)
    signed = sum(c[k, 0] * c[(k + 1) % 4, 1] - c[(k + 1) % 4, 0] * c[k, 1] for k in range(4)) / 2
    assert signed == pytest.approx(4 * 0.5 * 0.25)


@pytest.mark.parametrize("yaw, expected", [(0.0, (0, 1)), (math.pi / 2, (-1, 0)), (math.pi, (0, -1))])
def test_front_direction(yaw, expected):
    np.testing.assert_allclose(front_direction(Pose(0, 0, yaw)), expected, atol=1e-15)


def test_wall_back_yaw_faces_room():
    # the front of an asset with its back on a wall points along the inward normal
    normals = [(0, 1), (-1, 0), (0, -1), (1, 0)]
    for k, n in enumerate(normals):
        np.testing.assert_allclose(front_direction(Pose(0, 0, wall_back_yaw(k))), n, atol=1e-15)


def test_wall_distance_examples():
    room = Room(5.5, 5.5)
    sq = fp(0.5, 2.0, 0.0, 0.5, 0.5)
    assert wall_distance(sq, room, 3) == 0.0
    assert wall_distance(sq, room, 1) == pytest.approx(4.5)
    assert wall_distance(fp(-0.1, 2.0, 0.0, 0.5, 0.5), room, 3) == pytest.approx(-0.6)
    with pytest.raises(ValueError):
        wall_distance(sq, room, 4)


def test_penetration_examples():
    a = fp(0, 0, 0, 0.5, 0.5)
    assert penetration_depth(a, fp(3, 0, 0, 0.5, 0.5)) == 0.0
    assert penetration_depth(a, fp(0.6, 0, 0, 0.5, 0.5)) == pytest.approx(0.4)
    assert penetration_depth(a, a) == pytest.approx(1.0)


def test_overlap_ratio_examples():
    a = fp(0, 0, 0, 0.5, 0.5)
    assert overlap_ratio(a, fp(5, 5, 0, 0.5, 0.5)) == 0.0
    assert overlap_ratio(a, a) == pytest.approx(1.0)
    assert overlap_ratio(a, fp(0.5, 0, 0, 0.5, 0.5)) == pytest.approx(0.5)


def test_bounding_circle():
    assert bounding_circle_radius(fp(0, 0, 1.0, 0.3, 0.4)) == pytest.approx(0.5)


@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_penetration_symmetric_and_matches_bruteforce(a, b):
    fa, fb = fp(*a), fp(*b)
    pd = penetration_depth(fa, fb)
    assert pd == pytest.approx(penetration_depth(fb, fa), abs=1e-12)
    assert pd == pytest.approx(penetration_oracle(a[:3] + (2 * a[3], 2 * a[4]), b[:3] + (2 * b[3], 2 * b[4])),
                               abs=1e-9)


@example((0.9381731282408745, 0.999, 0.999, 0.9381731282408745, 0.9381731282408745),
         (0.9381731282408745, 0.999, 0.999, 0.999, 0.9381731282408745))
@settings(max_examples=300, deadline=None)
@given(boxes, boxes)
def test_intersection_area_matches_shapely(a, b):
    oracle = intersection_area_oracle(a[:3] + (2 * a[3], 2 * a[4]), b[:3] + (2 * b[3], 2 * b[4]))
    assert intersection_area(fp(*a), fp(*b)) == pytest.approx(oracle, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes, coord, coord)
def test_translation_invariance(a, b, dx, dy):
    fa, fb = fp(*a), fp(*b)
    ta, tb = fa.translated(dx, dy), fb.translated(dx, dy)
    assert penetration_depth(ta, tb) == pytest.approx(penetration_depth(fa, fb), abs=1e-9)
    assert overlap_ratio(ta, tb) == pytest.approx(overlap_ratio(fa, fb), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(boxes)
def test_corners_periodic_in_yaw(a):
    x, y, yaw, hw, hd = a
    np.testing.assert_allclose(fp(x, y, yaw + 2 * math.pi, hw, hd).corners(), fp(*a).corners(), atol=1e-12)


def test_positive_depth_iff_positive_area_10k_pairs():
    rng = np.random.default_rng(11)
    disagreements = 0
    for _ in range(10_000):
        a = fp(*rng.uniform(-1.5, 1.5, 2), rng.uniform(0, 2 * math.pi), *rng.uniform(0.1, 1.0, 2))
        b = fp(*rng.uniform(-1.5, 1.5, 2), rng.uniform(0, 2 * math.pi), *rng.uniform(0.1, 1.0, 2))
        pd = penetration_depth(a, b)
        area = intersection_area(a, b)
        # both sides get the same tolerance so grazing contacts count as zero
        disagreements += (pd > 1e-9) != (area > 1e-12)
    assert disagreements == 0
