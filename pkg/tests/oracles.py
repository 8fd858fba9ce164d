"""Independent reference implementations used as test oracles.

Nothing here imports package kernels; each oracle is a direct, slow
restatement of the quantity it checks.
"""
import math

import numpy as np
from shapely.geometry import Polygon

# governing dimension per (relation, mode, operational class); rationale; approach axis
BAND_TABLE = {
    "FacingAccess": ("acc", "frontal", {"PO": "forward_reach", "HO": "forward_reach"}),
    "AdjacentUse": ("acc", "lateral", {"PO": "lateral_reach", "HO": "lateral_reach"}),
    "ClearancePassage": ("clr", "frontal", {"PO": "body_breadth", "HO": "body_breadth"}),
    "OperationalClearance": ("clr", "frontal", {
        "PO": {"storage": "body_depth", "seat": "body_depth", None: "body_depth"},
        "HO": {"storage": "extended_arm_reach", "seat": "buttock_toe_length", None: "extended_arm_reach"},
    }),
}


def band_oracle(kind, subj, obj, profile, tau, mode):
    """Hand-coded band: ``(d_min, d_max)`` for subject/object dicts with w, d, cls."""
    rationale, axis, dims = BAND_TABLE[kind]
    dim = dims[mode]
    if isinstance(dim, dict):
        dim = dim[subj["cls"]]
    value = getattr(profile, dim)
    if axis == "lateral":
        e = subj["w"] / 2 + obj["w"] / 2
    else:
        e = subj["d"] / 2 + obj["d"] / 2
    if rationale == "acc":
        lo, hi = e + value, e + value + tau
    else:
        lo, hi = e + value - tau, e + value
    return max(lo, e), hi


def corners(x, y, yaw, w, d):
    """Footprint corners from first principles (rotate the local rectangle)."""
    out = []
    for sx, sy in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        lx, ly = sx * w / 2, sy * d / 2
        out.append((x + lx * math.cos(yaw) - ly * math.sin(yaw),
                    y + lx * math.sin(yaw) + ly * math.cos(yaw)))
    return out


def cf_oracle(items):
    """items: list of (x, y, yaw, w, d). Eq-style pair count with strict separation."""
    n = len(items)
    if n < 2:
        return 1.0
    ok = 0
    pairs = 0
    for i in range(n):
        for j in range(i + 1, n):
            xi, yi, _, wi, di = items[i]
            xj, yj, _, wj, dj = items[j]
            ri = math.sqrt((wi / 2) ** 2 + (di / 2) ** 2)
            rj = math.sqrt((wj / 2) ** 2 + (dj / 2) ** 2)
            dist = math.sqrt((xi - xj) ** 2 + (yi - yj) ** 2)
            pairs += 1
            if dist > ri + rj:
                ok += 1
    return ok / pairs


def ib_oracle(items, W, D):
    if not items:
        return 1.0
    inside = 0
    for x, y, yaw, w, d in items:
        cs = corners(x, y, yaw, w, d)
        xs = [c[0] for c in cs]
        ys = [c[1] for c in cs]
        if 0 <= min(xs) and max(xs) <= W and 0 <= min(ys) and max(ys) <= D:
            inside += 1
    return inside / len(items)


def polygon(x, y, yaw, w, d):
    return Polygon(corners(x, y, yaw, w, d))


def intersection_area_oracle(a, b):
    """Overlap area of two ``(x, y, yaw, w, d)`` boxes.

    Uses shapely's snap-rounding overlay: the floating overlay can collapse
    boxes with collinear edges to zero area.
    """
    return polygon(*a).intersection(polygon(*b), grid_size=1e-12).area


def penetration_oracle(a, b):
    """Minimum translation distance by brute force over the four face normals."""
    ca = np.array(corners(*a))
    cb = np.array(corners(*b))
    best = math.inf
    for yaw in (a[2], b[2]):
        for ax in ((math.cos(yaw), math.sin(yaw)), (-math.sin(yaw), math.cos(yaw))):
            pa = ca @ ax
            pb = cb @ ax
            ov = min(pa.max() - pb.min(), pb.max() - pa.min())
            if ov <= 0:
                return 0.0
            best = min(best, ov)
    return best


def occupancy_oracle(xy, headings, breadth, depth, stature, box_min, box_max, voxel):
    """Brute-force voxel coverage: every cell center tested against every frame polygon."""
    ext = [hi - lo for lo, hi in zip(box_min, box_max)]
    n = [max(1, int(round(e / voxel))) for e in ext]
    cell = [e / k for e, k in zip(ext, n)]
    gx = box_min[0] + (np.arange(n[0]) + 0.5) * cell[0]
    gy = box_min[1] + (np.arange(n[1]) + 0.5) * cell[1]
    gz = box_min[2] + (np.arange(n[2]) + 0.5) * cell[2]
    X, Y = np.meshgrid(gx, gy)
    covered = np.zeros(X.shape, dtype=bool)
    for (px, py), yaw in zip(xy, headings):
        cs = corners(px, py, yaw, breadth, depth)
        inside = np.ones(X.shape, dtype=bool)
        for k in range(4):
            (ax, ay), (bx, by) = cs[k], cs[(k + 1) % 4]
            cross = (bx - ax) * (Y - ay) - (by - ay) * (X - ax)
            inside &= cross >= -1e-12
        covered |= inside
    layers = np.count_nonzero((gz >= 0) & (gz <= stature))
    return covered.sum() * layers / (n[0] * n[1] * n[2])


def heading_oracle(xy):
    """Yaw of the arriving step; yaw 0 until the first move, still frames hold."""
    out = [0.0]
    for k in range(1, len(xy)):
        dx, dy = xy[k][0] - xy[k - 1][0], xy[k][1] - xy[k - 1][1]
        out.append(math.atan2(-dx, dy) if (dx or dy) else out[-1])
    return out


def heatmap_means_oracle(episodes, W, D, res):
    """Dict cell -> time-weighted mean speed by direct summation."""
    num = {}
    den = {}
    for fps, xy in episodes:
        for k in range(len(xy) - 1):
            v = math.dist(xy[k], xy[k + 1]) * fps
            x, y = xy[k]
            if not (0 <= x <= W and 0 <= y <= D):
                continue
            cell = (min(int(y / D * res), res - 1), min(int(x / W * res), res - 1))
            num[cell] = num.get(cell, 0.0) + v / fps
            den[cell] = den.get(cell, 0.0) + 1.0 / fps
    return {c: num[c] / den[c] for c in num}
