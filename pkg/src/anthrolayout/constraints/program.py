"""Compile relations into a weighted penalty program and evaluate it."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from ..anthropometry import AnthropometricProfile, derive_distance_band, governing_dimension, load_dimension_map
from ..errors import ConfigurationError, EvaluationError, SchemaError, VersionMismatchError
from ..geometry import Room
from ..relations import (DISTANCE_KINDS, ObjectAsset, Relation, RelationKind, SemanticGroup, detect_conflicts,
                         group_order, resolve_conflicts)
from . import kernels

DUMP_FORMAT = "anthrolayout.constraint_program"
DUMP_VERSION = 1

MODES = ("baseline", "PO", "HO")


class TermKind(str, Enum):
    DISTANCE = "Distance"
    AGAINST_WALL = "AgainstWall"
    ALIGN_WITH = "AlignWith"
    POINT_TOWARDS = "PointTowards"
    ON_TOP_OF = "OnTopOf"
    COLLISION = "Collision"
    BOUNDARY = "Boundary"


_REQUIRED_PARAMS = {
    TermKind.DISTANCE: ("d_min", "d_max"),
    TermKind.AGAINST_WALL: ("wall",),
    TermKind.ALIGN_WITH: ("theta",),
    TermKind.POINT_TOWARDS: ("theta",),
    TermKind.ON_TOP_OF: ("h",),
    TermKind.COLLISION: (),
    TermKind.BOUNDARY: (),
}
_ARITY = {TermKind.AGAINST_WALL: 1, TermKind.BOUNDARY: 1}


@dataclass(frozen=True)
class PenaltyTerm:
    kind: TermKind
    indices: tuple
    params: dict = field(default_factory=dict, hash=False)
    weight: float = 1.0
    relation_id: str = ""
    rationale: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", TermKind(self.kind))
        if not math.isfinite(self.weight) or self.weight < 0:
            raise SchemaError(f"term weight must be finite and >= 0, got {self.weight}")
        missing = [p for p in _REQUIRED_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise SchemaError(f"{self.kind.value} term missing parameters {missing}")
        if len(self.indices) != _ARITY.get(self.kind, 2):
            raise SchemaError(f"{self.kind.value} term takes {_ARITY.get(self.kind, 2)} poses")


@dataclass(frozen=True)
class CompileConfig:
    tau_accessibility: float = 0.10
    tau_clearance: float = 0.15
    relation_weight: float = 1.0
    collision_weight: float = 1.0
    collision_weight_overlap: float = 10.0
    overlap_threshold: float = 0.5
    boundary_weight: float = 1.0
    boundary_margin: float = 1e-4
    collision_gap: float = 0.0   # required free space between footprints, m
    dimension_map: Optional[str] = None
    baseline_bands: Optional[str] = None
    conflict_priority: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "CompileConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown constraint config keys {sorted(unknown)}")
        d = dict(d)
        if "conflict_priority" in d:
            d["conflict_priority"] = tuple(d["conflict_priority"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["conflict_priority"] = list(self.conflict_priority)
        return d


@dataclass
class ConstraintProgram:
    """Ordered penalty terms over the pose vector ``[x0, y0, yaw0, x1, ...]``.

    Pose slots follow ``assets`` (sorted by id). ``stacking`` holds
    ``(subject, support, h)`` index triples whose heights are assigned
    algebraically rather than optimized.
    """

    assets: tuple
    room: Room
    terms: tuple
    mode: str = "HO"
    frozen: frozenset = frozenset()
    stacking: tuple = ()
    margin: float = 0.0
    _packed: Optional[kernels.PackedTerms] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.assets)
        for t in self.terms:
            if any(not 0 <= i < n for i in t.indices):
                raise SchemaError(f"term {t.kind.value} indexes a pose outside 0..{n - 1}")

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def asset_ids(self) -> tuple:
        return tuple(a.id for a in self.assets)

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.terms], dtype=float)

    def packed(self) -> kernels.PackedTerms:
        if self._packed is None:
            self._packed = pack_terms(self.terms, self.assets, self.room, self.margin)
        return self._packed

    def subset(self, term_indices, frozen=None) -> "ConstraintProgram":
        return replace(self, terms=tuple(self.terms[k] for k in term_indices),
                       frozen=self.frozen if frozen is None else frozenset(frozen), _packed=None)

    def with_weights(self, weights) -> "ConstraintProgram":
        terms = tuple(replace(t, weight=float(w)) for t, w in zip(self.terms, weights))
        return replace(self, terms=terms, _packed=None)

    def z_bases(self, poses=None) -> np.ndarray:
        """Floor offsets: stacked assets rest ``h`` above their support's top."""
        z = np.zeros(self.n_assets)
        # supports may themselves be stacked; resolve in dependency order
        pending = list(self.stacking)
        for _ in range(len(pending) + 1):
            rest = []
            stacked = {s for s, _, _ in pending}
            for s, sup, h in pending:
                if sup in stacked:
                    rest.append((s, sup, h))
                else:
                    z[s] = z[sup] + self.assets[sup].height + h
            if not rest:
                break
            pending = rest
        return z


def pack_terms(terms, assets, room, margin=0.0) -> kernels.PackedTerms:
    blocks = {k: [] for k in TermKind}
    for n, t in enumerate(terms):
        blocks[t.kind].append((n, t))

    def ints(rows, col):
        return np.array([r[col] for r in rows], dtype=np.int64)

    def floats(rows, col):
        return np.array([r[col] for r in rows], dtype=float)

    def rows(kind, fn):
        return [fn(n, t) for n, t in blocks[kind]]

    dist = rows(TermKind.DISTANCE, lambda n, t: (n, t.indices[0], t.indices[1], t.params["d_min"], t.params["d_max"]))
    wall = rows(TermKind.AGAINST_WALL, lambda n, t: (n, t.indices[0], t.params["wall"]))
    align = rows(TermKind.ALIGN_WITH, lambda n, t: (n, t.indices[0], t.indices[1], t.params["theta"]))
    point = rows(TermKind.POINT_TOWARDS, lambda n, t: (n, t.indices[0], t.indices[1], t.params["theta"]))
    ontop = rows(TermKind.ON_TOP_OF, lambda n, t: (n, t.indices[0], t.indices[1]))
    coll = rows(TermKind.COLLISION, lambda n, t: (n, t.indices[0], t.indices[1], t.params.get("gap", 0.0)))
    bound = rows(TermKind.BOUNDARY, lambda n, t: (n, t.indices[0]))
    return kernels.PackedTerms(
        n_terms=len(terms),
        hw=np.array([a.half_width for a in assets], dtype=float),
        hd=np.array([a.half_depth for a in assets], dtype=float),
        room_w=float(room.width), room_d=float(room.depth),
        dist=(ints(dist, 0), ints(dist, 1), ints(dist, 2), floats(dist, 3), floats(dist, 4)),
        wall=(ints(wall, 0), ints(wall, 1), ints(wall, 2)),
        align=(ints(align, 0), ints(align, 1), ints(align, 2), floats(align, 3)),
        point=(ints(point, 0), ints(point, 1), ints(point, 2), floats(point, 3)),
        ontop=(ints(ontop, 0), ints(ontop, 1), ints(ontop, 2)),
        coll=(ints(coll, 0), ints(coll, 1), ints(coll, 2), floats(coll, 3)),
        bound=(ints(bound, 0), ints(bound, 1)),
        margin=float(margin),
    )


# ---------------------------------------------------------------------------
# compile
# ---------------------------------------------------------------------------

def load_baseline_bands(path=None) -> dict:
    if path is None:
        text = resources.files("anthrolayout").joinpath("data/baseline_bands.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


def compile_program(groups: Sequence[SemanticGroup], inter_relations: Sequence[Relation],
                    assets: Sequence[ObjectAsset], profile: Optional[AnthropometricProfile],
                    room: Room, mode: str = "HO", config: Optional[CompileConfig] = None) -> ConstraintProgram:
    """Build the penalty program for one scene.

    Relation terms come first (groups in placement order, then inter-group
    relations), followed by a Collision term per unordered asset pair that is
    not stacked and a Boundary term per asset.
    """
    config = config or CompileConfig()
    if mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "baseline" and profile is None:
        raise ConfigurationError(f"profile required for mode {mode}")
    assets = tuple(sorted(assets, key=lambda a: a.id))
    index = {a.id: k for k, a in enumerate(assets)}
    if len(index) != len(assets):
        raise SchemaError("asset ids must be unique")
    dmap = load_dimension_map(config.dimension_map)
    baseline = load_baseline_bands(config.baseline_bands) if mode == "baseline" else None

    def idx(asset_id):
        try:
            return index[asset_id]
        except KeyError:
            raise SchemaError(f"relation references unknown asset {asset_id}") from None

    relations = [r for g in group_order(groups) for r in g.intra_relations] + list(inter_relations)
    if config.conflict_priority:
        relations = resolve_conflicts(relations, detect_conflicts(relations), config.conflict_priority)
    terms = []
    stacking = []
    stacked_pairs = set()
    wr = config.relation_weight
    for rel in relations:
        s = idx(rel.subject)
        if rel.kind in DISTANCE_KINDS:
            t = idx(rel.target)
            band = _band(rel, assets[s], assets[t], profile, mode, config, dmap, baseline)
            why = band.pop("rationale")
            terms.append(PenaltyTerm(TermKind.DISTANCE, (s, t), band, wr, rel.id, why))
            if rel.kind == RelationKind.FACING_ACCESS:
                terms.append(PenaltyTerm(TermKind.POINT_TOWARDS, (s, t), {"theta": float(rel.angle or 0.0)},
                                         wr, rel.id, "Orientation: front faces the accessed object"))
        elif rel.kind == RelationKind.AGAINST_WALL:
            terms.append(PenaltyTerm(TermKind.AGAINST_WALL, (s,), {"wall": int(rel.wall)}, wr, rel.id,
                                     "Placement: back against wall"))
        elif rel.kind == RelationKind.ALIGN_WITH:
            terms.append(PenaltyTerm(TermKind.ALIGN_WITH, (s, idx(rel.target)), {"theta": float(rel.angle or 0.0)},
                                     wr, rel.id, "Orientation: task alignment"))
        elif rel.kind == RelationKind.POINT_TOWARDS:
            terms.append(PenaltyTerm(TermKind.POINT_TOWARDS, (s, idx(rel.target)), {"theta": float(rel.angle or 0.0)},
                                     wr, rel.id, "Orientation: viewing direction"))
        elif rel.kind == RelationKind.ON_TOP_OF:
            t = idx(rel.target)
            terms.append(PenaltyTerm(TermKind.ON_TOP_OF, (s, t), {"h": float(rel.height)}, wr, rel.id,
                                     "Height: stacked on support"))
            stacking.append((s, t, float(rel.height)))
            stacked_pairs.add((min(s, t), max(s, t)))

    n = len(assets)
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in stacked_pairs:
                continue
            terms.append(PenaltyTerm(TermKind.COLLISION, (i, j), {"gap": config.collision_gap},
                                     config.collision_weight, "",
                                     "Physical: no footprint interpenetration"))
    for i in range(n):
        terms.append(PenaltyTerm(TermKind.BOUNDARY, (i,), {}, config.boundary_weight, "",
                                 "Physical: footprint inside room"))
    return ConstraintProgram(assets, room, tuple(terms), mode, frozenset(), tuple(stacking),
                             config.boundary_margin)


def _band(rel, a, b, profile, mode, config, dmap, baseline) -> dict:
    if mode == "baseline":
        _, _, axis = governing_dimension(rel.kind, a, "HO", dmap)
        extent = a.half_width + b.half_width if axis == "lateral" else a.half_depth + b.half_depth
        lo, hi = baseline["gaps"][rel.kind.value]
        return {"d_min": extent + lo, "d_max": extent + hi,
                "rationale": f"Baseline: generic gap [{lo:.2f}, {hi:.2f}] m ({axis})"}
    _, rationale, _ = governing_dimension(rel.kind, a, mode, dmap)
    tau = rel.tau
    if tau is None:
        tau = config.tau_accessibility if rationale.value == "Accessibility" else config.tau_clearance
    band = derive_distance_band(rel.kind, a, b, profile, tau, mode, dmap)
    return {"d_min": band.d_min, "d_max": band.d_max, "tau": band.tau, "rationale": band.describe()}


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class Evaluation:
    total: float
    values: np.ndarray      # unweighted violation per term
    gradient: np.ndarray    # flat, length 3 * n_assets


def as_pose_matrix(program: ConstraintProgram, poses) -> np.ndarray:
    P = np.asarray(poses, dtype=float)
    if P.ndim == 1:
        if P.size != 3 * program.n_assets:
            raise EvaluationError(f"pose vector has {P.size} entries, program expects {3 * program.n_assets}")
        P = P.reshape(-1, 3)
    if P.shape != (program.n_assets, 3):
        raise EvaluationError(f"pose array shape {P.shape} does not match {program.n_assets} assets")
    if not np.all(np.isfinite(P)):
        raise EvaluationError("non-finite pose")
    return P


def eval_program(program: ConstraintProgram, poses, weights=None, use_numba=None) -> Evaluation:
    """Total ``sum(w * v)``, per-term violations and the analytic gradient."""
    P = as_pose_matrix(program, poses)
    w = program.weights if weights is None else np.asarray(weights, dtype=float)
    vals, G = kernels.evaluate(program.packed(), P, w, use_numba)
    if program.frozen:
        G[list(program.frozen)] = 0.0
    total = float(np.dot(w, vals)) if len(vals) else 0.0
    return Evaluation(total, vals, G.reshape(-1))


def adaptive_weights(program: ConstraintProgram, poses, config: Optional[CompileConfig] = None,
                     use_numba=None) -> np.ndarray:
    """Term weights with collision terms boosted where footprints overlap heavily."""
    config = config or CompileConfig()
    P = as_pose_matrix(program, poses)
    packed = program.packed()
    w = program.weights
    tidx = packed.coll[0]
    if tidx.size:
        w[tidx] = kernels.collision_weights(packed, P, config.overlap_threshold, config.collision_weight,
                                            config.collision_weight_overlap, use_numba)
    return w


# ---------------------------------------------------------------------------
# dump
# ---------------------------------------------------------------------------

def term_participants(program, term) -> list:
    return [program.assets[i].id for i in term.indices]


def dump_program(program: ConstraintProgram, poses=None) -> dict:
    terms = []
    for n, t in enumerate(program.terms):
        terms.append({"index": n, "kind": t.kind.value, "participants": term_participants(program, t),
                      "params": dict(t.params), "weight": t.weight,
                      "provenance": {"relation_id": t.relation_id, "rationale": t.rationale}})
    d = {"format": DUMP_FORMAT, "format_version": DUMP_VERSION, "mode": program.mode,
         "room": program.room.to_dict(), "boundary_margin": program.margin,
         "assets": [{"id": a.id, "category": a.category, "width": a.width, "depth": a.depth,
                     "height": a.height} for a in program.assets],
         "frozen": sorted(program.assets[i].id for i in program.frozen),
         "stacking": [{"subject": program.assets[s].id, "support": program.assets[t].id, "h": h}
                      for s, t, h in program.stacking],
         "terms": terms}
    if poses is not None:
        P = as_pose_matrix(program, poses)
        z = program.z_bases()
        d["poses"] = {a.id: {"x": float(P[k, 0]), "y": float(P[k, 1]), "z_base": float(z[k]),
                             "yaw": float(P[k, 2])} for k, a in enumerate(program.assets)}
    return d


def load_program(d: dict) -> tuple:
    """Inverse of :func:`dump_program`; returns ``(program, poses or None)``."""
    if d.get("format") != DUMP_FORMAT:
        raise SchemaError(f"not a constraint program dump (format={d.get('format')!r})")
    if d.get("format_version") != DUMP_VERSION:
        raise VersionMismatchError(f"constraint dump version {d.get('format_version')!r} "
                                   f"is not supported (expected {DUMP_VERSION})")
    assets = tuple(ObjectAsset(a["id"], a.get("category", ""), a["width"], a["depth"], a["height"])
                   for a in d["assets"])
    index = {a.id: k for k, a in enumerate(assets)}
    terms = tuple(PenaltyTerm(t["kind"], tuple(index[p] for p in t["participants"]), dict(t["params"]),
                              float(t["weight"]), t["provenance"]["relation_id"], t["provenance"]["rationale"])
                  for t in d["terms"])
    room = Room(**d["room"])
    stacking = tuple((index[s["subject"]], index[s["support"]], float(s["h"])) for s in d.get("stacking", []))
    program = ConstraintProgram(assets, room, terms, d.get("mode", "HO"),
                                frozenset(index[i] for i in d.get("frozen", [])), stacking,
                                float(d.get("boundary_margin", 0.0)))
    poses = None
    if "poses" in d:
        poses = np.array([[d["poses"][a.id]["x"], d["poses"][a.id]["y"], d["poses"][a.id]["yaw"]]
                          for a in assets])
    return program, poses
