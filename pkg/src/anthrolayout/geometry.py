"""Planar oriented-box geometry.

Frame convention: +X right, +Y forward (the asset's front), yaw is measured
counterclockwise from +X. Walls are indexed south, east, north, west.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit

TWO_PI = 2.0 * math.pi

SOUTH, EAST, NORTH, WEST = 0, 1, 2, 3
WALL_NAMES = ("south", "east", "north", "west")

# inward unit normal of each wall, indexed like the walls
WALL_NORMALS = np.array([[0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [1.0, 0.0]])

# corner sign pattern, counterclockwise starting back-left
CORNER_SIGNS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def normalize_yaw(yaw: float) -> float:
    y = math.fmod(yaw, TWO_PI)
    if y < 0.0:
        y += TWO_PI
    # fmod of a value just below 0 can round up to exactly 2*pi
    if y >= TWO_PI:
        y = 0.0
    return y


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    yaw: float = 0.0
    z_base: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError(f"non-finite pose {self!r}")
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z_base": self.z_base, "yaw": self.yaw}


@dataclass(frozen=True)
class OrientedFootprint:
    """Rectangle of half extents ``half_width`` (local X) and ``half_depth`` (local Y)."""

    center: tuple
    half_width: float
    half_depth: float
    yaw: float = 0.0

    def __post_init__(self):
        if self.half_width < 0 or self.half_depth < 0:
            raise ValueError("footprint half extents must be non-negative")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def from_pose(cls, pose: Pose, width: float, depth: float) -> "OrientedFootprint":
        return cls((pose.x, pose.y), 0.5 * width, 0.5 * depth, pose.yaw)

    @property
    def area(self) -> float:
        return 4.0 * self.half_width * self.half_depth

    def corners(self) -> np.ndarray:
        """(4, 2) array of corners, counterclockwise."""
        return footprint_corners(self.center[0], self.center[1], self.yaw,
                                 self.half_width, self.half_depth)

    def translated(self, dx: float, dy: float) -> "OrientedFootprint":
        return OrientedFootprint((self.center[0] + dx, self.center[1] + dy),
                                 self.half_width, self.half_depth, self.yaw)


@dataclass(frozen=True)
class Room:
    width: float
    depth: float
    height: float = 2.5

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0 and self.height > 0):
            raise ValueError("room dimensions must be positive")

    def walls(self) -> list:
        """Wall segments as ((x0, y0), (x1, y1)), counterclockwise from south."""
        W, D = self.width, self.depth
        return [((0.0, 0.0), (W, 0.0)), ((W, 0.0), (W, D)),
                ((W, D), (0.0, D)), ((0.0, D), (0.0, 0.0))]

    def to_dict(self) -> dict:
        return {"width": self.width, "depth": self.depth, "height": self.height}


def footprint_corners(x, y, yaw, hw, hd) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    lx = CORNER_SIGNS[:, 0] * hw
    ly = CORNER_SIGNS[:, 1] * hd
    return np.stack([x + c * lx - s * ly, y + s * lx + c * ly], axis=1)


def bounding_circle_radius(footprint: OrientedFootprint) -> float:
    return math.hypot(footprint.half_width, footprint.half_depth)


def front_direction(pose: Pose) -> np.ndarray:
    return np.array([-math.sin(pose.yaw), math.cos(pose.yaw)])


def wall_back_yaw(wall_index: int) -> float:
    """Yaw at which an asset's back rests on the given wall (front faces the room)."""
    return wall_index * 0.5 * math.pi


def wall_distance(footprint: OrientedFootprint, room: Room, wall_index: int) -> float:
    """Signed distance from the footprint's nearest corner to a wall line.

    Positive inside the room, negative when a corner has crossed the wall.
    """
    if wall_index not in (0, 1, 2, 3):
        raise ValueError(f"wall index must be 0..3, got {wall_index}")
    pts = footprint.corners()
    return float(_signed_wall_offsets(pts, room.width, room.depth, wall_index).min())


def _signed_wall_offsets(pts, W, D, wall):
    if wall == SOUTH:
        return pts[:, 1]
    if wall == EAST:
        return W - pts[:, 0]
    if wall == NORTH:
        return D - pts[:, 1]
    return pts[:, 0]


# ---------------------------------------------------------------------------
# separating-axis penetration and polygon clipping (scalar kernels)
# ---------------------------------------------------------------------------

@njit
def _sgn(v):
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@njit
def sat_depth_grad(xa, ya, ta, hwa, hda, xb, yb, tb, hwb, hdb, out):
    """Penetration depth of two boxes and its gradient.

    ``out`` (length 6) receives d(depth)/d(xa, ya, ta, xb, yb, tb). Ties on the
    minimal axis resolve to the first axis in (A.x, A.y, B.x, B.y) order, and
    sign(0) is taken as 0; both only matter on measure-zero sets.
    """
    for k in range(6):
        out[k] = 0.0
    ca = math.cos(ta)
    sa = math.sin(ta)
    cb = math.cos(tb)
    sb = math.sin(tb)
    dx = xb - xa
    dy = yb - ya
    best = np.inf
    best_k = -1
    for k in range(4):
        if k == 0:
            ux, uy = ca, sa
        elif k == 1:
            ux, uy = -sa, ca
        elif k == 2:
            ux, uy = cb, sb
        else:
            ux, uy = -sb, cb
        ra = hwa * abs(ux * ca + uy * sa) + hda * abs(-ux * sa + uy * ca)
        rb = hwb * abs(ux * cb + uy * sb) + hdb * abs(-ux * sb + uy * cb)
        ov = ra + rb - abs(dx * ux + dy * uy)
        if ov <= 0.0:
            return 0.0
        if ov < best:
            best = ov
            best_k = k
    k = best_k
    # chosen axis u and its derivative w.r.t. its owner's yaw
    if k == 0:
        ux, uy, upx, upy = ca, sa, -sa, ca
    elif k == 1:
        ux, uy, upx, upy = -sa, ca, -ca, -sa
    elif k == 2:
        ux, uy, upx, upy = cb, sb, -sb, cb
    else:
        ux, uy, upx, upy = -sb, cb, -cb, -sb
    own_a = 1.0 if k < 2 else 0.0
    own_b = 1.0 - own_a
    sd = _sgn(dx * ux + dy * uy)
    out[0] = sd * ux
    out[1] = sd * uy
    out[3] = -sd * ux
    out[4] = -sd * uy
    # axes of both boxes: A0=(ca,sa), A1=(-sa,ca), B0=(cb,sb), B1=(-sb,cb)
    pa0 = _sgn(ux * ca + uy * sa)
    pa1 = _sgn(-ux * sa + uy * ca)
    pb0 = _sgn(ux * cb + uy * sb)
    pb1 = _sgn(-ux * sb + uy * cb)
    dax, day = own_a * upx, own_a * upy
    dbx, dby = own_b * upx, own_b * upy
    out[2] = (hwa * pa0 * (dax * ca + day * sa + (-ux * sa + uy * ca))
              + hda * pa1 * (-dax * sa + day * ca - (ux * ca + uy * sa))
              + hwb * pb0 * (dax * cb + day * sb)
              + hdb * pb1 * (-dax * sb + day * cb)
              - sd * (dx * dax + dy * day))
    out[5] = (hwa * pa0 * (dbx * ca + dby * sa)
              + hda * pa1 * (-dbx * sa + dby * ca)
              + hwb * pb0 * (dbx * cb + dby * sb + (-ux * sb + uy * cb))
              + hdb * pb1 * (-dbx * sb + dby * cb - (ux * cb + uy * sb))
              - sd * (dx * dbx + dy * dby))
    return best


@njit
def _box_poly(x, y, t, hw, hd, px, py):
    c = math.cos(t)
    s = math.sin(t)
    sx = (-1.0, 1.0, 1.0, -1.0)
    sy = (-1.0, -1.0, 1.0, 1.0)
    for i in range(4):
        lx = sx[i] * hw
        ly = sy[i] * hd
        px[i] = x + c * lx - s * ly
        py[i] = y + s * lx + c * ly


@njit
def clip_area(xa, ya, ta, hwa, hda, xb, yb, tb, hwb, hdb):
    """Intersection area of two boxes by Sutherland-Hodgman clipping."""
    cx = np.empty(4)
    cy = np.empty(4)
    _box_poly(xb, yb, tb, hwb, hdb, cx, cy)
    px = np.empty(12)
    py = np.empty(12)
    qx = np.empty(12)
    qy = np.empty(12)
    tx = np.empty(4)
    ty = np.empty(4)
    _box_poly(xa, ya, ta, hwa, hda, tx, ty)
    n = 4
    for i in range(4):
        px[i] = tx[i]
        py[i] = ty[i]
    for e in range(4):
        ex0 = cx[e]
        ey0 = cy[e]
        ex1 = cx[(e + 1) % 4]
        ey1 = cy[(e + 1) % 4]
        m = 0
        for i in range(n):
            sx0 = px[i]
            sy0 = py[i]
            sx1 = px[(i + 1) % n]
            sy1 = py[(i + 1) % n]
            d0 = (ex1 - ex0) * (sy0 - ey0) - (ey1 - ey0) * (sx0 - ex0)
            d1 = (ex1 - ex0) * (sy1 - ey0) - (ey1 - ey0) * (sx1 - ex0)
            if d0 >= 0.0:
                qx[m] = sx0
                qy[m] = sy0
                m += 1
            if (d0 >= 0.0) != (d1 >= 0.0):
                r = d0 / (d0 - d1)
                qx[m] = sx0 + r * (sx1 - sx0)
                qy[m] = sy0 + r * (sy1 - sy0)
                m += 1
        n = m
        for i in range(n):
            px[i] = qx[i]
            py[i] = qy[i]
        if n == 0:
            return 0.0
    area = 0.0
    for i in range(n):
        j = (i + 1) % n
        area += px[i] * py[j] - px[j] * py[i]
    return max(0.5 * area, 0.0)


def penetration_depth(a: OrientedFootprint, b: OrientedFootprint) -> float:
    """Minimum translation distance separating two footprints (0 if disjoint or touching)."""
    g = np.empty(6)
    return float(sat_depth_grad(a.center[0], a.center[1], a.yaw, a.half_width, a.half_depth,
                                b.center[0], b.center[1], b.yaw, b.half_width, b.half_depth, g))


def intersection_area(a: OrientedFootprint, b: OrientedFootprint) -> float:
    return float(clip_area(a.center[0], a.center[1], a.yaw, a.half_width, a.half_depth,
                           b.center[0], b.center[1], b.yaw, b.half_width, b.half_depth))


def overlap_ratio(a: OrientedFootprint, b: OrientedFootprint) -> float:
    """Intersection area over the smaller footprint area, in [0, 1]."""
    smaller = min(a.area, b.area)
    if smaller <= 0.0:
        return 0.0
    return min(1.0, intersection_area(a, b) / smaller)
