"""Layout scores and behavior metrics computed from recorded trajectories."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from . import _accel
from ._accel import njit
from .anthropometry import AnthropometricProfile, ManipulationBox
from .errors import EvaluationError, SchemaError
from .geometry import Room


# ---------------------------------------------------------------------------
# geometric scores
# ---------------------------------------------------------------------------

def _centers_and_radii(layout):
    c = np.array([[p.x, p.y] for p in layout.poses], dtype=float).reshape(-1, 2)
    r = np.array([math.hypot(a.half_width, a.half_depth) for a in layout.assets], dtype=float)
    return c, r


def collision_free_score(layout) -> float:
    """Share of unordered asset pairs whose bounding circles are strictly apart."""
    c, r = _centers_and_radii(layout)
    n = len(r)
    if n < 2:
        return 1.0
    iu, ju = np.triu_indices(n, 1)
    d = np.hypot(c[iu, 0] - c[ju, 0], c[iu, 1] - c[ju, 1])
    return float(np.count_nonzero(d > r[iu] + r[ju])) / iu.size


def colliding_pairs(layout) -> list:
    c, r = _centers_and_radii(layout)
    out = []
    for i in range(len(r)):
        for j in range(i + 1, len(r)):
            if not math.hypot(*(c[i] - c[j])) > r[i] + r[j]:
                out.append((layout.assets[i].id, layout.assets[j].id))
    return out


def in_boundary_score(layout, room: Optional[Room] = None) -> float:
    """Share of assets whose footprint bounds satisfy ``0 <= min`` and ``max <= size``."""
    room = room or layout.room
    if not layout.assets:
        return 1.0
    inside = 0
    for fp in layout.footprints():
        pts = fp.corners()
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        if lo[0] >= 0.0 and lo[1] >= 0.0 and hi[0] <= room.width and hi[1] <= room.depth:
            inside += 1
    return inside / len(layout.assets)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BodyBox:
    breadth: float
    depth: float
    stature: float

    @classmethod
    def from_profile(cls, profile: AnthropometricProfile) -> "BodyBox":
        return cls(profile.body_breadth, profile.body_depth, profile.stature)


@dataclass(frozen=True)
class TrajectoryEpisode:
    participant: str
    fps: float
    t: np.ndarray
    positions: np.ndarray
    body: Optional[BodyBox] = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3) or pos.shape[0] != t.size:
            raise SchemaError("positions must be an (n, 2) or (n, 3) array matching the timestamps")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise SchemaError(f"fps must be > 0, got {self.fps}")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise SchemaError("timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(pos))):
            raise SchemaError("trajectory contains non-finite samples")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "positions", pos)

    def __len__(self):
        return self.t.size

    @property
    def xy(self) -> np.ndarray:
        return self.positions[:, :2]

    def with_body(self, body: BodyBox) -> "TrajectoryEpisode":
        return TrajectoryEpisode(self.participant, self.fps, self.t, self.positions, body)

    def headings(self) -> np.ndarray:
        """Per-frame yaw of the step that arrived at the frame.

        Frames before any motion face yaw 0; still frames keep the previous
        heading, so appending frames never changes earlier headings.
        """
        xy = self.xy
        yaw = np.zeros(xy.shape[0])
        last = 0.0
        for k in range(1, xy.shape[0]):
            dx, dy = xy[k] - xy[k - 1]
            if dx != 0.0 or dy != 0.0:
                last = math.atan2(-dx, dy)
            yaw[k] = last
        return yaw

    def to_dict(self) -> dict:
        keys = ("x", "y", "z")
        return {"participant": self.participant, "fps": self.fps,
                "samples": [{"t": float(t), **{keys[c]: float(v) for c, v in enumerate(row)}}
                            for t, row in zip(self.t, self.positions)]}


def episode_from_dict(d: dict) -> TrajectoryEpisode:
    try:
        samples = d["samples"]
        has_z = bool(samples) and all("z" in s for s in samples)
        cols = ("x", "y", "z") if has_z else ("x", "y")
        t = [float(s["t"]) for s in samples]
        pos = [[float(s[c]) for c in cols] for s in samples]
        return TrajectoryEpisode(str(d["participant"]), float(d["fps"]), np.array(t),
                                 np.array(pos).reshape(-1, len(cols)))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed trajectory: {exc}") from None


def load_trajectory(path) -> TrajectoryEpisode:
    """Read a trajectory from ``.json`` or delimited text (see docs/formats.md)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            return episode_from_dict(json.load(fh))
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip()]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, val = ln[1:].partition(":")
            meta[key.strip()] = val.strip()
        else:
            body.append(ln)
    reader = csv.DictReader(body)
    for r in reader:
        rows.append(r)
    if "participant" not in meta or "fps" not in meta:
        raise SchemaError(f"{path}: header needs '# participant:' and '# fps:' lines")
    try:
        samples = [{k: float(v) for k, v in r.items() if k in ("t", "x", "y", "z") and v != ""} for r in rows]
        return episode_from_dict({"participant": meta["participant"], "fps": float(meta["fps"]),
                                  "samples": samples})
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# volumetric occupancy
# ---------------------------------------------------------------------------

@njit
def _cover_columns_nb(xs, ys, yaws, hb, hd, x0, y0, cx, cy, nx, ny, mask):
    for f in range(xs.shape[0]):
        c = math.cos(yaws[f])
        s = math.sin(yaws[f])
        ex = abs(c) * hb + abs(s) * hd
        ey = abs(s) * hb + abs(c) * hd
        i0 = max(0, int(math.floor((xs[f] - ex - x0) / cx - 0.5)))
        i1 = min(nx - 1, int(math.ceil((xs[f] + ex - x0) / cx - 0.5)))
        j0 = max(0, int(math.floor((ys[f] - ey - y0) / cy - 0.5)))
        j1 = min(ny - 1, int(math.ceil((ys[f] + ey - y0) / cy - 0.5)))
        for j in range(j0, j1 + 1):
            py = y0 + (j + 0.5) * cy - ys[f]
            for i in range(i0, i1 + 1):
                if mask[j, i]:
                    continue
                px = x0 + (i + 0.5) * cx - xs[f]
                u = c * px + s * py
                v = -s * px + c * py
                if abs(u) <= hb and abs(v) <= hd:
                    mask[j, i] = True


def _cover_columns_np(xs, ys, yaws, hb, hd, x0, y0, cx, cy, nx, ny, mask):
    gx = x0 + (np.arange(nx) + 0.5) * cx
    gy = y0 + (np.arange(ny) + 0.5) * cy
    px = gx[None, :] - xs[:, None]
    py = gy[None, :] - ys[:, None]
    c = np.cos(yaws)[:, None, None]
    s = np.sin(yaws)[:, None, None]
    # frames x rows x cols; chunk frames to bound memory
    step = max(1, 2_000_000 // max(1, nx * ny))
    for a in range(0, xs.size, step):
        sl = slice(a, a + step)
        PX = px[sl, None, :]
        PY = py[sl, :, None]
        u = c[sl] * PX + s[sl] * PY
        v = -s[sl] * PX + c[sl] * PY
        mask |= np.any((np.abs(u) <= hb) & (np.abs(v) <= hd), axis=0)


def volumetric_occupancy_ratio(episode: TrajectoryEpisode, box: ManipulationBox, voxel: float = 0.05,
                               body: Optional[BodyBox] = None) -> float:
    """Fraction of ``box`` swept by the per-frame body boxes of ``episode``.

    Each frame contributes a ``breadth x depth`` footprint centered on the
    sample and turned to the walking heading, extruded from the floor to
    stature. ``box`` is voxelized into cells of roughly ``voxel`` meters
    (rounded so the cells tile it exactly); a cell counts when its center is
    covered.
    """
    if voxel <= 0:
        raise EvaluationError("voxel size must be > 0")
    body = body or episode.body
    if body is None:
        raise EvaluationError("occupancy needs body box dimensions")
    if len(episode) == 0:
        return 0.0
    (x0, y0, z0), (x1, y1, z1) = box.min_corner, box.max_corner
    nx = max(1, round((x1 - x0) / voxel))
    ny = max(1, round((y1 - y0) / voxel))
    nz = max(1, round((z1 - z0) / voxel))
    cx, cy, cz = (x1 - x0) / nx, (y1 - y0) / ny, (z1 - z0) / nz
    zc = z0 + (np.arange(nz) + 0.5) * cz
    layers = int(np.count_nonzero((zc >= 0.0) & (zc <= body.stature)))
    if layers == 0:
        return 0.0
    mask = np.zeros((ny, nx), dtype=np.bool_)
    xy = np.ascontiguousarray(episode.xy)
    fn = _cover_columns_nb if _accel.USE_NUMBA else _cover_columns_np
    fn(xy[:, 0].copy(), xy[:, 1].copy(), episode.headings(), 0.5 * body.breadth, 0.5 * body.depth,
       x0, y0, cx, cy, nx, ny, mask)
    return float(np.count_nonzero(mask)) * layers / (nx * ny * nz)


# ---------------------------------------------------------------------------
# distinct trajectories
# ---------------------------------------------------------------------------

def _segment_box_distance(a, b, hx, hy):
    """Distance from segments ``a->b`` (local frame, shape (m, 2)) to the box ``|x|<=hx, |y|<=hy``."""
    d = b - a
    # segment vs box: zero if the segment crosses the box (slab clipping)
    tmin = np.zeros(len(a))
    tmax = np.ones(len(a))
    hit = np.ones(len(a), dtype=bool)
    for k, h in ((0, hx), (1, hy)):
        dk = d[:, k]
        ak = a[:, k]
        par = dk == 0
        hit &= ~(par & (np.abs(ak) > h))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h - ak) / dk
            t2 = (h - ak) / dk
        lo = np.where(par, -np.inf, np.minimum(t1, t2))
        hi = np.where(par, np.inf, np.maximum(t1, t2))
        tmin = np.maximum(tmin, lo)
        tmax = np.minimum(tmax, hi)
    hit &= tmin <= tmax

    def point_box(p):
        q = np.maximum(np.abs(p) - [hx, hy], 0.0)
        return np.hypot(q[:, 0], q[:, 1])

    best = np.minimum(point_box(a), point_box(b))
    dd = np.einsum("ij,ij->i", d, d)
    for cxy in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
        cpt = np.array(cxy)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(dd > 0, np.einsum("ij,ij->i", cpt - a, d) / dd, 0.0)
        t = np.clip(t, 0.0, 1.0)
        proj = a + t[:, None] * d
        best = np.minimum(best, np.hypot(*(proj - cpt).T))
    return np.where(hit, 0.0, best)


def detour_signature(episode: TrajectoryEpisode, layout, body_breadth: float,
                     threshold: float = 0.5) -> tuple:
    """Ordered ``(obstacle id, side)`` events for every obstacle the path passes near.

    ``side`` is ``"left"`` when the obstacle lies to the walker's left at the
    closest approach to its center, ``"right"`` for the mirror case and
    ``"through"`` when the path crosses the center line exactly.
    """
    xy = episode.xy
    if xy.shape[0] == 1:
        xy = np.vstack([xy, xy])
    a, b = xy[:-1], xy[1:]
    seg = b - a
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    arc0 = np.concatenate([[0.0], np.cumsum(seg_len)])[:-1]
    events = []
    inflate = 0.5 * body_breadth
    for asset, pose in zip(layout.assets, layout.poses):
        c, s = math.cos(pose.yaw), math.sin(pose.yaw)
        rot = np.array([[c, -s], [s, c]])
        la = (a - [pose.x, pose.y]) @ rot
        lb = (b - [pose.x, pose.y]) @ rot
        dist = _segment_box_distance(la, lb, asset.half_width + inflate, asset.half_depth + inflate)
        if dist.min() > threshold:
            continue
        # closest approach to the obstacle center
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(seg_len > 0, np.einsum("ij,ij->i", -la, lb - la) / seg_len ** 2, 0.0)
        t = np.clip(t, 0.0, 1.0)
        proj = la + t[:, None] * (lb - la)
        dc = np.hypot(proj[:, 0], proj[:, 1])
        k = int(np.argmin(dc))
        direction = seg[k]
        to_center = np.array([pose.x, pose.y]) - (a[k] + t[k] * seg[k])
        cross = direction[0] * to_center[1] - direction[1] * to_center[0]
        side = "left" if cross > 0 else "right" if cross < 0 else "through"
        events.append((arc0[k] + t[k] * seg_len[k], asset.id, side))
    events.sort(key=lambda e: (e[0], e[1]))
    return tuple((aid, side) for _, aid, side in events)


def count_distinct_trajectories(episodes: Sequence[TrajectoryEpisode], layout,
                                body_breadth: Optional[float] = None, threshold: float = 0.5) -> int:
    """Number of distinct detour signatures among ``episodes``."""
    if not episodes:
        raise EvaluationError("distinct-trajectory count needs at least one episode")
    sigs = set()
    for ep in episodes:
        b = body_breadth if body_breadth is not None else (ep.body.breadth if ep.body else 0.0)
        sigs.add(detour_signature(ep, layout, b, threshold))
    return len(sigs)


# ---------------------------------------------------------------------------
# speed heatmap
# ---------------------------------------------------------------------------

@dataclass
class HeatmapGrid:
    """Per-cell mean speed (m/s); rows run along +y, columns along +x."""

    mean: np.ndarray        # NaN where never visited
    visited: np.ndarray
    smoothed: np.ndarray    # NaN where never visited
    cell_size: tuple        # (x, y) meters per cell
    sigma: float

    @property
    def resolution(self) -> tuple:
        return self.mean.shape

    def save_raw(self, path) -> None:
        """Header line of JSON, then row-major little-endian float64 smoothed values."""
        rows, cols = self.mean.shape
        header = {"format": "anthrolayout.heatmap", "format_version": 1, "rows": rows, "cols": cols,
                  "cell_size_x": self.cell_size[0], "cell_size_y": self.cell_size[1],
                  "sigma": self.sigma, "dtype": "<f8", "empty": "NaN"}
        with open(path, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
            fh.write(np.ascontiguousarray(self.smoothed, dtype="<f8").tobytes())

    def save_image(self, path, vmax: Optional[float] = None) -> None:
        """Grayscale image, brightest at ``vmax`` m/s; row 0 is the far (north) wall."""
        from PIL import Image

        vals = np.nan_to_num(self.smoothed, nan=0.0)
        top = vmax if vmax is not None else float(vals.max()) or 1.0
        img = np.clip(vals / top, 0.0, 1.0) * 255.0
        Image.fromarray(np.flipud(np.rint(img).astype(np.uint8)), mode="L").save(path, format="PPM")


def load_raw_heatmap(path) -> tuple:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        data = np.frombuffer(fh.read(), dtype=header["dtype"])
    return header, data.reshape(header["rows"], header["cols"])


@njit
def _accumulate_nb(ix, iy, v, dt, num, den):
    for k in range(ix.shape[0]):
        num[iy[k], ix[k]] += v[k] * dt
        den[iy[k], ix[k]] += dt


def _accumulate_np(ix, iy, v, dt, num, den):
    rows, cols = num.shape
    flat = iy * cols + ix
    num += np.bincount(flat, weights=v * dt, minlength=rows * cols).reshape(rows, cols)
    den += np.bincount(flat, minlength=rows * cols).reshape(rows, cols) * dt


def speed_sums(episodes: Sequence[TrajectoryEpisode], room: Room, resolution: int = 1024) -> tuple:
    """Per-cell ``(sum v*dt, sum dt)`` with the speed sample binned at its start point."""
    fps = {ep.fps for ep in episodes}
    if len(fps) > 1:
        raise EvaluationError(f"episodes disagree on fps: {sorted(fps)}")
    num = np.zeros((resolution, resolution))
    den = np.zeros((resolution, resolution))
    if not episodes:
        return num, den
    rate = fps.pop()
    dt = 1.0 / rate
    acc = _accumulate_nb if _accel.USE_NUMBA else _accumulate_np
    for ep in episodes:
        if len(ep) < 2:
            raise EvaluationError(f"episode {ep.participant} needs at least 2 samples")
        xy = ep.xy
        step = np.diff(xy, axis=0)
        v = np.hypot(step[:, 0], step[:, 1]) * rate
        p = xy[:-1]
        inside = (p[:, 0] >= 0) & (p[:, 0] <= room.width) & (p[:, 1] >= 0) & (p[:, 1] <= room.depth)
        ix = np.minimum((p[inside, 0] / room.width * resolution).astype(np.int64), resolution - 1)
        iy = np.minimum((p[inside, 1] / room.depth * resolution).astype(np.int64), resolution - 1)
        acc(ix, iy, np.ascontiguousarray(v[inside]), dt, num, den)
    return num, den


def mean_speed_heatmap(episodes: Sequence[TrajectoryEpisode], room: Room, resolution: int = 1024,
                       sigma: float = 0.01) -> HeatmapGrid:
    """Time-weighted mean speed per cell, then masked Gaussian smoothing.

    Smoothing is a normalized convolution restricted to visited cells, so
    empty space never pulls speeds toward zero.
    """
    num, den = speed_sums(episodes, room, resolution)
    visited = den > 0
    mean = np.full(num.shape, np.nan)
    mean[visited] = num[visited] / den[visited]
    cell = (room.width / resolution, room.depth / resolution)
    sig = (sigma / cell[1], sigma / cell[0])
    w = visited.astype(float)
    top = gaussian_filter(np.where(visited, mean, 0.0), sig, mode="constant", cval=0.0)
    bottom = gaussian_filter(w, sig, mode="constant", cval=0.0)
    smoothed = np.full(num.shape, np.nan)
    ok = visited & (bottom > 0)
    smoothed[ok] = np.maximum(top[ok] / bottom[ok], 0.0)
    return HeatmapGrid(mean, visited, smoothed, cell, sigma)
