"""Penalty value/gradient kernels.

Every kernel writes unweighted violations into ``vals[tidx]`` and adds the
weighted gradient into ``G`` (shape ``(n_assets, 3)`` for x, y, yaw). Each
kind exists as a numba loop (``*_nb``) and a vectorized numpy function
(``*_np``); :func:`evaluate` picks one family per ``_accel.USE_NUMBA``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import _accel
from .._accel import njit
from ..geometry import CORNER_SIGNS, WALL_NORMALS, clip_area, sat_depth_grad

HALF_PI = 0.5 * math.pi

_SX = CORNER_SIGNS[:, 0].copy()
_SY = CORNER_SIGNS[:, 1].copy()


@dataclass
class PackedTerms:
    """Struct-of-arrays view of a term list, one block per kind."""

    n_terms: int
    hw: np.ndarray
    hd: np.ndarray
    room_w: float
    room_d: float
    dist: tuple      # (tidx, i, j, dmin, dmax)
    wall: tuple      # (tidx, i, wall)
    align: tuple     # (tidx, i, j, theta)
    point: tuple     # (tidx, i, j, theta)
    ontop: tuple     # (tidx, i, j)
    coll: tuple      # (tidx, i, j, gap)
    bound: tuple     # (tidx, i)
    margin: float = 0.0


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit
def distance_nb(P, tidx, ii, jj, dmin, dmax, w, vals, G):
    for k in range(tidx.shape[0]):
        i = ii[k]
        j = jj[k]
        dx = P[j, 0] - P[i, 0]
        dy = P[j, 1] - P[i, 1]
        r = math.sqrt(dx * dx + dy * dy)
        lo = max(0.0, dmin[k] - r)
        hi = max(0.0, r - dmax[k])
        t = tidx[k]
        vals[t] = lo * lo + hi * hi
        if r > 0.0:
            s = w[t] * (2.0 * hi - 2.0 * lo) / r
            G[j, 0] += s * dx
            G[j, 1] += s * dy
            G[i, 0] -= s * dx
            G[i, 1] -= s * dy


@njit
def align_nb(P, tidx, ii, jj, theta, w, vals, G):
    for k in range(tidx.shape[0]):
        i = ii[k]
        j = jj[k]
        delta = P[i, 2] - P[j, 2] - theta[k]
        t = tidx[k]
        vals[t] = 1.0 - math.cos(delta)
        g = w[t] * math.sin(delta)
        G[i, 2] += g
        G[j, 2] -= g


@njit
def point_nb(P, tidx, ii, jj, theta, w, vals, G):
    for k in range(tidx.shape[0]):
        i = ii[k]
        j = jj[k]
        t = tidx[k]
        dx = P[j, 0] - P[i, 0]
        dy = P[j, 1] - P[i, 1]
        r = math.sqrt(dx * dx + dy * dy)
        phi = P[i, 2] + theta[k]
        fx = -math.sin(phi)
        fy = math.cos(phi)
        if r == 0.0:
            vals[t] = 1.0
            continue
        ux = dx / r
        uy = dy / r
        dot = fx * ux + fy * uy
        vals[t] = 1.0 - dot
        wt = w[t]
        G[i, 2] += wt * (math.cos(phi) * ux + math.sin(phi) * uy)
        gx = -(fx - dot * ux) / r
        gy = -(fy - dot * uy) / r
        G[j, 0] += wt * gx
        G[j, 1] += wt * gy
        G[i, 0] -= wt * gx
        G[i, 1] -= wt * gy


@njit
def wall_nb(P, hw, hd, room_w, room_d, tidx, ii, walls, w, vals, G):
    for k in range(tidx.shape[0]):
        i = ii[k]
        t = tidx[k]
        wl = walls[k]
        c = math.cos(P[i, 2])
        s = math.sin(P[i, 2])
        nx = WALL_NORMALS[wl, 0]
        ny = WALL_NORMALS[wl, 1]
        best = np.inf
        bdx = 0.0
        bdy = 0.0
        for q in range(4):
            lx = _SX[q] * hw[i]
            ly = _SY[q] * hd[i]
            px = P[i, 0] + c * lx - s * ly
            py = P[i, 1] + s * lx + c * ly
            if wl == 0:
                off = py
            elif wl == 1:
                off = room_w - px
            elif wl == 2:
                off = room_d - py
            else:
                off = px
            if off < best:
                best = off
                bdx = -s * lx - c * ly
                bdy = c * lx - s * ly
        ang = P[i, 2] - wl * HALF_PI
        vals[t] = best * best + 1.0 - math.cos(ang)
        wt = w[t]
        G[i, 0] += wt * 2.0 * best * nx
        G[i, 1] += wt * 2.0 * best * ny
        G[i, 2] += wt * (2.0 * best * (nx * bdx + ny * bdy) + math.sin(ang))


@njit
def ontop_nb(P, tidx, ii, jj, w, vals, G):
    for k in range(tidx.shape[0]):
        i = ii[k]
        j = jj[k]
        t = tidx[k]
        ox = P[i, 0] - P[j, 0]
        oy = P[i, 1] - P[j, 1]
        vals[t] = ox * ox + oy * oy
        G[i, 0] += w[t] * 2.0 * ox
        G[i, 1] += w[t] * 2.0 * oy
        G[j, 0] -= w[t] * 2.0 * ox
        G[j, 1] -= w[t] * 2.0 * oy


@njit
def collision_nb(P, hw, hd, tidx, ii, jj, gap, w, vals, G):
    g = np.empty(6)
    for k in range(tidx.shape[0]):
        i = ii[k]
        j = jj[k]
        t = tidx[k]
        pad = 0.5 * gap[k]
        pd = sat_depth_grad(P[i, 0], P[i, 1], P[i, 2], hw[i] + pad, hd[i] + pad,
                            P[j, 0], P[j, 1], P[j, 2], hw[j] + pad, hd[j] + pad, g)
        vals[t] = pd * pd
        if pd > 0.0:
            s = w[t] * 2.0 * pd
            G[i, 0] += s * g[0]
            G[i, 1] += s * g[1]
            G[i, 2] += s * g[2]
            G[j, 0] += s * g[3]
            G[j, 1] += s * g[4]
            G[j, 2] += s * g[5]


@njit
def boundary_nb(P, hw, hd, room_w, room_d, margin, tidx, ii, w, vals, G):
    lo = margin
    hix = room_w - margin
    hiy = room_d - margin
    for k in range(tidx.shape[0]):
        i = ii[k]
        t = tidx[k]
        c = math.cos(P[i, 2])
        s = math.sin(P[i, 2])
        v = 0.0
        gx = 0.0
        gy = 0.0
        gt = 0.0
        for q in range(4):
            lx = _SX[q] * hw[i]
            ly = _SY[q] * hd[i]
            px = P[i, 0] + c * lx - s * ly
            py = P[i, 1] + s * lx + c * ly
            ex = min(0.0, px - lo) + max(0.0, px - hix)
            ey = min(0.0, py - lo) + max(0.0, py - hiy)
            v += ex * ex + ey * ey
            gx += 2.0 * ex
            gy += 2.0 * ey
            gt += 2.0 * ex * (-s * lx - c * ly) + 2.0 * ey * (c * lx - s * ly)
        vals[t] = v
        G[i, 0] += w[t] * gx
        G[i, 1] += w[t] * gy
        G[i, 2] += w[t] * gt


@njit
def collision_weights_nb(P, hw, hd, ii, jj, threshold, w_lo, w_hi, out):
    g = np.empty(6)
    for k in range(ii.shape[0]):
        i = ii[k]
        j = jj[k]
        out[k] = w_lo
        pd = sat_depth_grad(P[i, 0], P[i, 1], P[i, 2], hw[i], hd[i],
                            P[j, 0], P[j, 1], P[j, 2], hw[j], hd[j], g)
        if pd <= 0.0:
            continue
        smaller = min(4.0 * hw[i] * hd[i], 4.0 * hw[j] * hd[j])
        if smaller <= 0.0:
            continue
        area = clip_area(P[i, 0], P[i, 1], P[i, 2], hw[i], hd[i],
                         P[j, 0], P[j, 1], P[j, 2], hw[j], hd[j])
        if min(1.0, area / smaller) > threshold:
            out[k] = w_hi


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------

def _scatter(G, idx, col, vals):
    np.add.at(G[:, col], idx, vals)


def distance_np(P, tidx, ii, jj, dmin, dmax, w, vals, G):
    if tidx.size == 0:
        return
    d = P[jj, :2] - P[ii, :2]
    r = np.hypot(d[:, 0], d[:, 1])
    lo = np.maximum(0.0, dmin - r)
    hi = np.maximum(0.0, r - dmax)
    vals[tidx] = lo * lo + hi * hi
    safe = np.where(r > 0.0, r, 1.0)
    s = np.where(r > 0.0, w[tidx] * (2.0 * hi - 2.0 * lo) / safe, 0.0)
    for col in (0, 1):
        _scatter(G, jj, col, s * d[:, col])
        _scatter(G, ii, col, -s * d[:, col])


def align_np(P, tidx, ii, jj, theta, w, vals, G):
    if tidx.size == 0:
        return
    delta = P[ii, 2] - P[jj, 2] - theta
    vals[tidx] = 1.0 - np.cos(delta)
    g = w[tidx] * np.sin(delta)
    _scatter(G, ii, 2, g)
    _scatter(G, jj, 2, -g)


def point_np(P, tidx, ii, jj, theta, w, vals, G):
    if tidx.size == 0:
        return
    d = P[jj, :2] - P[ii, :2]
    r = np.hypot(d[:, 0], d[:, 1])
    ok = r > 0.0
    safe = np.where(ok, r, 1.0)
    ux, uy = d[:, 0] / safe, d[:, 1] / safe
    phi = P[ii, 2] + theta
    fx, fy = -np.sin(phi), np.cos(phi)
    dot = np.where(ok, fx * ux + fy * uy, 0.0)
    vals[tidx] = 1.0 - dot
    wt = np.where(ok, w[tidx], 0.0)
    _scatter(G, ii, 2, wt * (np.cos(phi) * ux + np.sin(phi) * uy))
    gx = -(fx - dot * ux) / safe * wt
    gy = -(fy - dot * uy) / safe * wt
    _scatter(G, jj, 0, gx)
    _scatter(G, jj, 1, gy)
    _scatter(G, ii, 0, -gx)
    _scatter(G, ii, 1, -gy)


def _corners_np(P, idx, hw, hd):
    c = np.cos(P[idx, 2])[:, None]
    s = np.sin(P[idx, 2])[:, None]
    lx = _SX[None, :] * hw[idx][:, None]
    ly = _SY[None, :] * hd[idx][:, None]
    px = P[idx, 0][:, None] + c * lx - s * ly
    py = P[idx, 1][:, None] + s * lx + c * ly
    # derivative of corner position w.r.t. yaw
    dpx = -s * lx - c * ly
    dpy = c * lx - s * ly
    return px, py, dpx, dpy


def wall_np(P, hw, hd, room_w, room_d, tidx, ii, walls, w, vals, G):
    if tidx.size == 0:
        return
    px, py, dpx, dpy = _corners_np(P, ii, hw, hd)
    offs = np.select([walls[:, None] == 0, walls[:, None] == 1, walls[:, None] == 2],
                     [py, room_w - px, room_d - py], px)
    q = np.argmin(offs, axis=1)
    ar = np.arange(tidx.size)
    best = offs[ar, q]
    n = WALL_NORMALS[walls]
    ang = P[ii, 2] - walls * HALF_PI
    vals[tidx] = best * best + 1.0 - np.cos(ang)
    wt = w[tidx]
    _scatter(G, ii, 0, wt * 2.0 * best * n[:, 0])
    _scatter(G, ii, 1, wt * 2.0 * best * n[:, 1])
    _scatter(G, ii, 2, wt * (2.0 * best * (n[:, 0] * dpx[ar, q] + n[:, 1] * dpy[ar, q]) + np.sin(ang)))


def ontop_np(P, tidx, ii, jj, w, vals, G):
    if tidx.size == 0:
        return
    off = P[ii, :2] - P[jj, :2]
    vals[tidx] = (off * off).sum(axis=1)
    for col in (0, 1):
        g = w[tidx] * 2.0 * off[:, col]
        _scatter(G, ii, col, g)
        _scatter(G, jj, col, -g)


def sat_np(A, B):
    """Vectorized :func:`sat_depth_grad`. ``A``, ``B``: (m, 5) rows of x, y, yaw, hw, hd."""
    ca, sa = np.cos(A[:, 2]), np.sin(A[:, 2])
    cb, sb = np.cos(B[:, 2]), np.sin(B[:, 2])
    A0 = np.stack([ca, sa], 1)
    A1 = np.stack([-sa, ca], 1)
    B0 = np.stack([cb, sb], 1)
    B1 = np.stack([-sb, cb], 1)
    U = np.stack([A0, A1, B0, B1], 1)
    Up = np.stack([A1, -A0, B1, -B0], 1)
    d = B[:, :2] - A[:, :2]

    def proj(E):
        return U[:, :, 0] * E[:, None, 0] + U[:, :, 1] * E[:, None, 1]

    pA0, pA1, pB0, pB1, dd = proj(A0), proj(A1), proj(B0), proj(B1), proj(d)
    ra = A[:, 3, None] * np.abs(pA0) + A[:, 4, None] * np.abs(pA1)
    rb = B[:, 3, None] * np.abs(pB0) + B[:, 4, None] * np.abs(pB1)
    ov = ra + rb - np.abs(dd)
    sep = (ov <= 0.0).any(axis=1)
    k = np.argmin(ov, axis=1)
    ar = np.arange(A.shape[0])
    pd = np.where(sep, 0.0, ov[ar, k])
    u = U[ar, k]
    up = Up[ar, k]
    sd = np.sign(dd[ar, k])
    own_a = (k < 2).astype(float)[:, None]
    da = own_a * up
    db = (1.0 - own_a) * up

    def dot(x, y):
        return x[:, 0] * y[:, 0] + x[:, 1] * y[:, 1]

    sa0, sa1 = np.sign(dot(u, A0)), np.sign(dot(u, A1))
    sb0, sb1 = np.sign(dot(u, B0)), np.sign(dot(u, B1))
    hwa, hda, hwb, hdb = A[:, 3], A[:, 4], B[:, 3], B[:, 4]
    g = np.zeros((A.shape[0], 6))
    g[:, 0] = sd * u[:, 0]
    g[:, 1] = sd * u[:, 1]
    g[:, 3] = -sd * u[:, 0]
    g[:, 4] = -sd * u[:, 1]
    g[:, 2] = (hwa * sa0 * (dot(da, A0) + dot(u, A1)) + hda * sa1 * (dot(da, A1) - dot(u, A0))
               + hwb * sb0 * dot(da, B0) + hdb * sb1 * dot(da, B1) - sd * dot(d, da))
    g[:, 5] = (hwa * sa0 * dot(db, A0) + hda * sa1 * dot(db, A1)
               + hwb * sb0 * (dot(db, B0) + dot(u, B1)) + hdb * sb1 * (dot(db, B1) - dot(u, B0))
               - sd * dot(d, db))
    g[sep] = 0.0
    return pd, g


def _boxes(P, idx, hw, hd, pad=0.0):
    return np.column_stack([P[idx, 0], P[idx, 1], P[idx, 2], hw[idx] + pad, hd[idx] + pad])


def collision_np(P, hw, hd, tidx, ii, jj, gap, w, vals, G):
    if tidx.size == 0:
        return
    pad = 0.5 * gap
    pd, g = sat_np(_boxes(P, ii, hw, hd, pad), _boxes(P, jj, hw, hd, pad))
    vals[tidx] = pd * pd
    s = w[tidx] * 2.0 * pd
    for col in range(3):
        _scatter(G, ii, col, s * g[:, col])
        _scatter(G, jj, col, s * g[:, col + 3])


def boundary_np(P, hw, hd, room_w, room_d, margin, tidx, ii, w, vals, G):
    if tidx.size == 0:
        return
    px, py, dpx, dpy = _corners_np(P, ii, hw, hd)
    ex = np.minimum(0.0, px - margin) + np.maximum(0.0, px - (room_w - margin))
    ey = np.minimum(0.0, py - margin) + np.maximum(0.0, py - (room_d - margin))
    vals[tidx] = (ex * ex + ey * ey).sum(axis=1)
    wt = w[tidx]
    _scatter(G, ii, 0, wt * 2.0 * ex.sum(axis=1))
    _scatter(G, ii, 1, wt * 2.0 * ey.sum(axis=1))
    _scatter(G, ii, 2, wt * (2.0 * ex * dpx + 2.0 * ey * dpy).sum(axis=1))


def collision_weights_np(P, hw, hd, ii, jj, threshold, w_lo, w_hi, out):
    out[:] = w_lo
    if ii.size == 0:
        return
    pd, _ = sat_np(_boxes(P, ii, hw, hd), _boxes(P, jj, hw, hd))
    area_fn = getattr(clip_area, "py_func", clip_area)
    for k in np.flatnonzero(pd > 0.0):
        i, j = ii[k], jj[k]
        smaller = min(4.0 * hw[i] * hd[i], 4.0 * hw[j] * hd[j])
        if smaller <= 0.0:
            continue
        area = area_fn(P[i, 0], P[i, 1], P[i, 2], hw[i], hd[i],
                       P[j, 0], P[j, 1], P[j, 2], hw[j], hd[j])
        if min(1.0, area / smaller) > threshold:
            out[k] = w_hi


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

NUMBA_KERNELS = dict(distance=distance_nb, align=align_nb, point=point_nb, wall=wall_nb,
                     ontop=ontop_nb, collision=collision_nb, boundary=boundary_nb,
                     collision_weights=collision_weights_nb)
NUMPY_KERNELS = dict(distance=distance_np, align=align_np, point=point_np, wall=wall_np,
                     ontop=ontop_np, collision=collision_np, boundary=boundary_np,
                     collision_weights=collision_weights_np)


def kernels(use_numba=None) -> dict:
    if use_numba is None:
        use_numba = _accel.USE_NUMBA
    return NUMBA_KERNELS if use_numba else NUMPY_KERNELS


def evaluate(packed: PackedTerms, P: np.ndarray, weights: np.ndarray, use_numba=None):
    """Return ``(values, G)``: unweighted term violations and the weighted gradient."""
    K = kernels(use_numba)
    vals = np.zeros(packed.n_terms)
    G = np.zeros_like(P)
    hw, hd = packed.hw, packed.hd
    # overflow surfaces as a non-finite value, which the caller reports by term
    with np.errstate(over="ignore", invalid="ignore"):
        K["distance"](P, *packed.dist, weights, vals, G)
        K["wall"](P, hw, hd, packed.room_w, packed.room_d, *packed.wall, weights, vals, G)
        K["align"](P, *packed.align, weights, vals, G)
        K["point"](P, *packed.point, weights, vals, G)
        K["ontop"](P, *packed.ontop, weights, vals, G)
        K["collision"](P, hw, hd, *packed.coll, weights, vals, G)
        K["boundary"](P, hw, hd, packed.room_w, packed.room_d, packed.margin, *packed.bound, weights, vals, G)
    return vals, G


def collision_weights(packed: PackedTerms, P, threshold, w_lo, w_hi, use_numba=None) -> np.ndarray:
    K = kernels(use_numba)
    out = np.empty(packed.coll[0].size)
    K["collision_weights"](P, packed.hw, packed.hd, packed.coll[1], packed.coll[2],
                           threshold, w_lo, w_hi, out)
    return out
