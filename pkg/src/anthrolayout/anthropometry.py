"""Body-dimension profiles and their translation into distance bands and manipulation boxes."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, SamplingError, SchemaError
from .geometry import Pose
from .relations import DISTANCE_KINDS, ObjectAsset, RelationKind, parse_kind

PROFILE_DIMENSIONS = (
    "body_breadth",
    "body_depth",
    "forward_reach",
    "lateral_reach",
    "extended_arm_reach",
    "buttock_toe_length",
    "stature",
)

DEFAULT_TAU = {"Accessibility": 0.10, "Clearance": 0.15}


class Rationale(str, Enum):
    ACCESSIBILITY = "Accessibility"
    CLEARANCE = "Clearance"


@dataclass(frozen=True)
class AnthropometricProfile:
    body_breadth: float
    body_depth: float
    forward_reach: float
    lateral_reach: float
    extended_arm_reach: float
    buttock_toe_length: float
    stature: float
    extras: dict = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        problems = profile_violations(self)
        if problems:
            raise SchemaError("invalid anthropometric profile: " + "; ".join(problems))

    def get(self, name: str) -> float:
        if name in PROFILE_DIMENSIONS:
            return getattr(self, name)
        try:
            return self.extras[name]
        except KeyError:
            raise ConfigurationError(f"profile has no dimension {name!r}") from None

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in PROFILE_DIMENSIONS}
        if self.extras:
            d["extras"] = dict(sorted(self.extras.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnthropometricProfile":
        missing = [k for k in PROFILE_DIMENSIONS if k not in d]
        if missing:
            raise SchemaError(f"profile missing dimensions {missing}")
        extras = dict(d.get("extras", {}))
        return cls(*(float(d[k]) for k in PROFILE_DIMENSIONS), extras=extras)


def profile_violations(p) -> list:
    out = []
    for k in PROFILE_DIMENSIONS:
        v = getattr(p, k)
        if not (math.isfinite(v) and v > 0):
            out.append(f"{k} must be > 0, got {v}")
    for k, v in p.extras.items():
        if not (math.isfinite(v) and v > 0):
            out.append(f"{k} must be > 0, got {v}")
    if p.forward_reach > p.extended_arm_reach:
        out.append("forward_reach exceeds extended_arm_reach")
    if p.stature <= p.body_breadth:
        out.append("stature must exceed body_breadth")
    return out


def load_profile(path) -> AnthropometricProfile:
    with open(path) as fh:
        return AnthropometricProfile.from_dict(json.load(fh))


def group_profile(profiles: Sequence[AnthropometricProfile]) -> AnthropometricProfile:
    """Per-dimension maximum over the members of a team."""
    if not profiles:
        raise ConfigurationError("group profile needs at least one member")
    extras = {}
    for p in profiles:
        for k, v in p.extras.items():
            extras[k] = max(v, extras.get(k, v))
    return AnthropometricProfile(*(max(getattr(p, k) for p in profiles) for k in PROFILE_DIMENSIONS),
                                 extras=extras)


@dataclass(frozen=True)
class PercentileTable:
    bounds: dict  # dimension -> (p5, p95)

    def __post_init__(self):
        missing = [k for k in PROFILE_DIMENSIONS if k not in self.bounds]
        if missing:
            raise ConfigurationError(f"percentile table missing dimensions {missing}")
        for k, (lo, hi) in self.bounds.items():
            if not (0 < lo <= hi):
                raise ConfigurationError(f"percentile bounds for {k} must satisfy 0 < p5 <= p95")

    @classmethod
    def from_dict(cls, d: dict) -> "PercentileTable":
        bounds = {}
        for k, v in d.items():
            if k.startswith("_"):
                continue
            try:
                bounds[k] = (float(v["p5"]), float(v["p95"]))
            except (KeyError, TypeError):
                raise ConfigurationError(f"percentile entry {k!r} needs p5 and p95") from None
        return cls(bounds)

    @classmethod
    def load(cls, path=None) -> "PercentileTable":
        if path is None:
            text = resources.files("anthrolayout").joinpath("data/percentiles_example.json").read_text()
            return cls.from_dict(json.loads(text))
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {k: {"p5": lo, "p95": hi} for k, (lo, hi) in self.bounds.items()}


def sample_profile(table: PercentileTable, seed: int, max_retries: int = 100) -> AnthropometricProfile:
    """Draw every dimension uniformly within its percentile range.

    Dimensions tied by an ordering invariant are redrawn together until the
    invariant holds, at most ``max_retries`` times.
    """
    rng = np.random.default_rng(seed)
    extra_keys = sorted(k for k in table.bounds if k not in PROFILE_DIMENSIONS)
    order = list(PROFILE_DIMENSIONS) + extra_keys

    def draw(k):
        lo, hi = table.bounds[k]
        return float(rng.uniform(lo, hi)) if hi > lo else lo

    vals = {k: draw(k) for k in order}
    for _ in range(max_retries):
        bad = False
        if vals["forward_reach"] > vals["extended_arm_reach"]:
            vals["forward_reach"] = draw("forward_reach")
            vals["extended_arm_reach"] = draw("extended_arm_reach")
            bad = True
        if vals["stature"] <= vals["body_breadth"]:
            vals["body_breadth"] = draw("body_breadth")
            vals["stature"] = draw("stature")
            bad = True
        if not bad:
            break
    else:
        if vals["forward_reach"] > vals["extended_arm_reach"] or vals["stature"] <= vals["body_breadth"]:
            raise SamplingError(f"no valid profile within {max_retries} retries (seed {seed})")
    return AnthropometricProfile(*(vals[k] for k in PROFILE_DIMENSIONS),
                                 extras={k: vals[k] for k in extra_keys})


# ---------------------------------------------------------------------------
# distance bands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DistanceBand:
    d_min: float
    d_max: float
    rationale: Rationale
    tau: float
    dimension: str = ""
    dimension_value: float = 0.0
    approach_axis: str = "frontal"

    def __post_init__(self):
        if not (0.0 <= self.d_min <= self.d_max) or self.tau < 0:
            raise ValueError(f"invalid band [{self.d_min}, {self.d_max}] tau={self.tau}")

    def describe(self) -> str:
        return (f"{self.rationale.value}: {self.dimension}={self.dimension_value:.3f} m "
                f"({self.approach_axis}), tau={self.tau:.3f} m")


def load_dimension_map(path=None) -> dict:
    if path is None:
        text = resources.files("anthrolayout").joinpath("data/dimension_map.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


_DEFAULT_MAP = None


def _default_map():
    global _DEFAULT_MAP
    if _DEFAULT_MAP is None:
        _DEFAULT_MAP = load_dimension_map()
    return _DEFAULT_MAP


def governing_dimension(kind: RelationKind, subject: ObjectAsset, mode: str,
                        dimension_map: Optional[dict] = None) -> tuple:
    """``(dimension name, rationale, approach axis)`` for a distance relation."""
    kind = parse_kind(kind)
    if kind not in DISTANCE_KINDS:
        raise SchemaError(f"{kind.value} is not a distance relation")
    if mode not in ("PO", "HO"):
        raise ConfigurationError(f"anthropometric bands need mode PO or HO, got {mode!r}")
    dmap = dimension_map if dimension_map is not None else _default_map()
    try:
        entry = dmap["relations"][kind.value]
    except KeyError:
        raise SchemaError(f"dimension map has no entry for {kind.value}") from None
    sel = entry[mode]
    if isinstance(sel, dict):
        sel = sel.get(subject.operational_class or "default", sel["default"])
    return sel, Rationale(entry["rationale"]), entry.get("approach_axis", "frontal")


def derive_distance_band(kind, i: ObjectAsset, j: ObjectAsset, profile: AnthropometricProfile,
                         tau: Optional[float] = None, mode: str = "HO",
                         dimension_map: Optional[dict] = None) -> DistanceBand:
    """Center-to-center band for a distance relation between ``i`` and ``j``.

    Accessibility: ``[e + dim, e + dim + tau]``; clearance:
    ``[e + dim - tau, e + dim]``, where ``e`` is the sum of the two half
    extents along the approach axis. ``d_min`` never drops below ``e``.
    """
    dim, rationale, axis = governing_dimension(kind, i, mode, dimension_map)
    if tau is None:
        tau = DEFAULT_TAU[rationale.value]
    if tau < 0:
        raise SchemaError(f"tau must be >= 0, got {tau}")
    value = profile.get(dim)
    if axis == "lateral":
        extent = i.half_width + j.half_width
    else:
        extent = i.half_depth + j.half_depth
    reach = extent + value
    if rationale is Rationale.ACCESSIBILITY:
        d_min, d_max = reach, reach + tau
    else:
        d_min, d_max = reach - tau, reach
    d_min = max(d_min, extent)
    return DistanceBand(d_min, d_max, rationale, tau, dim, value, axis)


# ---------------------------------------------------------------------------
# manipulation space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ManipulationBox:
    min_corner: tuple
    max_corner: tuple
    depth_dimension: str = ""
    fallback: bool = False
    footprint: tuple = ()  # oriented corners before axis-aligning

    def __post_init__(self):
        if any(hi <= lo for lo, hi in zip(self.min_corner, self.max_corner)):
            raise ValueError("manipulation box needs positive extent on every axis")

    @property
    def extent(self) -> tuple:
        return tuple(hi - lo for lo, hi in zip(self.min_corner, self.max_corner))

    @property
    def volume(self) -> float:
        ex = self.extent
        return ex[0] * ex[1] * ex[2]

    def to_dict(self) -> dict:
        return {"min": list(self.min_corner), "max": list(self.max_corner),
                "depth_dimension": self.depth_dimension, "fallback": self.fallback}


def manipulation_box(target: ObjectAsset, pose: Pose, profile: AnthropometricProfile) -> ManipulationBox:
    """Box in front of ``target`` sized by the operating body.

    Depth comes from the operational dimension (extended arm reach for
    openable storage, buttock-toe length for seats, forward reach with
    ``fallback=True`` otherwise); width is the asset width plus a lateral
    reach on each side; height is stature.
    """
    cls = target.operational_class
    if cls == "storage":
        dim = "extended_arm_reach"
    elif cls == "seat":
        dim = "buttock_toe_length"
    else:
        dim = "forward_reach"
    depth = profile.get(dim)
    half_span = target.half_width + profile.lateral_reach
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    fx, fy = -s, c       # front
    rx, ry = c, s        # right
    ox = pose.x + fx * target.half_depth
    oy = pose.y + fy * target.half_depth
    pts = []
    for side, out in ((-1.0, 0.0), (1.0, 0.0), (1.0, depth), (-1.0, depth)):
        pts.append((ox + side * half_span * rx + out * fx, oy + side * half_span * ry + out * fy))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return ManipulationBox((min(xs), min(ys), 0.0), (max(xs), max(ys), profile.stature),
                           dim, cls is None, tuple(pts))
