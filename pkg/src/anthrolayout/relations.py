"""Assets, behavioral relations, semantic groups and the inference backends.

Two backends produce groups and relations for a scene:

* :class:`RuleBackend` looks every asset up in a category lexicon
  (``data/lexicon.json``) and is a pure function of ``(assets, room)``.
* :class:`RemoteBackend` posts the scene to an HTTP endpoint and validates the
  structured reply with :func:`validate_backend_payload`.
"""
from __future__ import annotations

import json
import logging
import math
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Any, Iterable, Optional, Sequence

from .errors import InferenceError, SchemaError, ValidationError
from .geometry import OrientedFootprint, Pose, Room

logger = logging.getLogger(__name__)

MAX_ACTIONS = 5
MAX_TAU = 1.0

STORAGE_PARTS = frozenset({"drawer", "door", "lid", "flap", "compartment"})
SEAT_PARTS = frozenset({"seat", "swivel_seat", "pull_out_seat", "recliner"})


class RelationKind(str, Enum):
    FACING_ACCESS = "FacingAccess"
    ADJACENT_USE = "AdjacentUse"
    CLEARANCE_PASSAGE = "ClearancePassage"
    OPERATIONAL_CLEARANCE = "OperationalClearance"
    AGAINST_WALL = "AgainstWall"
    ALIGN_WITH = "AlignWith"
    POINT_TOWARDS = "PointTowards"
    ON_TOP_OF = "OnTopOf"


DISTANCE_KINDS = frozenset({
    RelationKind.FACING_ACCESS,
    RelationKind.ADJACENT_USE,
    RelationKind.CLEARANCE_PASSAGE,
    RelationKind.OPERATIONAL_CLEARANCE,
})


def parse_kind(value) -> RelationKind:
    try:
        return RelationKind(value)
    except ValueError:
        raise SchemaError(f"unknown relation kind {value!r}") from None


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MovablePart:
    part: str
    motion_axis: str = "+Y"
    swing_extent: float = 0.0

    def to_dict(self) -> dict:
        return {"part": self.part, "motion_axis": self.motion_axis,
                "swing_extent": self.swing_extent}


@dataclass(frozen=True)
class ObjectAsset:
    id: str
    category: str
    width: float
    depth: float
    height: float
    movable_parts: tuple = ()
    image_refs: tuple = ()
    initial_pose: Optional[Pose] = None

    def __post_init__(self):
        if not self.id:
            raise SchemaError("asset id must be non-empty")
        for name in ("width", "depth", "height"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise SchemaError(f"asset {self.id}: {name} must be positive, got {v!r}")

    @property
    def half_width(self) -> float:
        return 0.5 * self.width

    @property
    def half_depth(self) -> float:
        return 0.5 * self.depth

    @property
    def footprint_area(self) -> float:
        return self.width * self.depth

    def footprint(self, pose: Pose) -> OrientedFootprint:
        return OrientedFootprint((pose.x, pose.y), self.half_width, self.half_depth, pose.yaw)

    @property
    def operational_class(self) -> Optional[str]:
        """``"storage"`` for openable parts, ``"seat"`` for seats, else None."""
        parts = {p.part for p in self.movable_parts}
        if parts & STORAGE_PARTS:
            return "storage"
        if parts & SEAT_PARTS:
            return "seat"
        return None

    def to_dict(self) -> dict:
        d = {"id": self.id, "category": self.category, "width": self.width,
             "depth": self.depth, "height": self.height,
             "movable_parts": [p.to_dict() for p in self.movable_parts],
             "image_refs": list(self.image_refs)}
        if self.initial_pose is not None:
            p = self.initial_pose
            d["initial_pose"] = {"x": p.x, "y": p.y, "yaw": p.yaw}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectAsset":
        try:
            parts = tuple(MovablePart(p["part"], p.get("motion_axis", "+Y"),
                                      float(p.get("swing_extent", 0.0)))
                          for p in d.get("movable_parts", []))
            pose = None
            if d.get("initial_pose") is not None:
                ip = d["initial_pose"]
                pose = Pose(float(ip["x"]), float(ip["y"]), float(ip.get("yaw", 0.0)))
            return cls(str(d["id"]), str(d["category"]), float(d["width"]), float(d["depth"]),
                       float(d["height"]), parts, tuple(d.get("image_refs", [])), pose)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed asset entry {d!r}: {exc}") from None


@dataclass(frozen=True)
class InteractionPattern:
    top_actions: tuple  # ((label, confidence), ...)

    def __post_init__(self):
        if len(self.top_actions) > MAX_ACTIONS:
            raise SchemaError(f"top_actions exceeds {MAX_ACTIONS}")
        confs = [c for _, c in self.top_actions]
        if any(not 0.0 <= c <= 1.0 for c in confs):
            raise SchemaError("action confidence outside [0, 1]")
        if any(b > a for a, b in zip(confs, confs[1:])):
            raise SchemaError("action confidences must be non-increasing")

    @property
    def labels(self) -> list:
        return [a for a, _ in self.top_actions]

    def to_dict(self) -> dict:
        return {"top_actions": [{"action": a, "confidence": c} for a, c in self.top_actions]}


@dataclass(frozen=True)
class FunctionalDescription:
    summary: str
    has_openable_part: bool = False
    is_seat: bool = False
    requires_frontal_access: bool = False
    viewing_target: bool = False

    def to_dict(self) -> dict:
        return {"summary": self.summary, "has_openable_part": self.has_openable_part,
                "is_seat": self.is_seat, "requires_frontal_access": self.requires_frontal_access,
                "viewing_target": self.viewing_target}


@dataclass(frozen=True)
class Relation:
    kind: RelationKind
    subject: str
    target: Optional[str] = None
    wall: Optional[int] = None
    angle: Optional[float] = None
    height: Optional[float] = None
    tau: Optional[float] = None
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", parse_kind(self.kind))
        errors = relation_errors(self)
        if errors:
            raise SchemaError("; ".join(errors))
        if not self.id:
            other = self.target if self.target is not None else f"wall{self.wall}"
            object.__setattr__(self, "id", f"{self.kind.value}:{self.subject}->{other}")

    @property
    def participants(self) -> tuple:
        return (self.subject,) if self.target is None else (self.subject, self.target)

    def to_dict(self) -> dict:
        d = {"id": self.id, "kind": self.kind.value, "subject": self.subject}
        for name in ("target", "wall", "angle", "height", "tau"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Relation":
        if not isinstance(d, dict):
            raise SchemaError(f"relation must be an object, got {d!r}")
        unknown = set(d) - {"id", "kind", "subject", "target", "wall", "angle", "height", "tau"}
        if unknown:
            raise SchemaError(f"relation has unknown fields {sorted(unknown)}")
        if "kind" not in d or "subject" not in d:
            raise SchemaError("relation requires 'kind' and 'subject'")
        return cls(kind=d["kind"], subject=d["subject"], target=d.get("target"),
                   wall=d.get("wall"), angle=d.get("angle"), height=d.get("height"),
                   tau=d.get("tau"), id=d.get("id", ""))


def relation_errors(rel) -> list:
    """Every invariant a relation violates, as messages."""
    errs = []
    kind = rel.kind
    if kind == RelationKind.AGAINST_WALL:
        if rel.wall not in (0, 1, 2, 3):
            errs.append(f"{kind.value}: wall index must be 0..3, got {rel.wall!r}")
        if rel.target is not None:
            errs.append(f"{kind.value}: takes a wall, not a target object")
    else:
        if rel.target is None:
            errs.append(f"{kind.value}: target object required")
        elif rel.target == rel.subject:
            errs.append(f"{kind.value}: subject and object must differ ({rel.subject})")
        if rel.wall is not None:
            errs.append(f"{kind.value}: wall index only valid for AgainstWall")
    if kind == RelationKind.ON_TOP_OF:
        if rel.height is None or not rel.height >= 0:
            errs.append("OnTopOf: height offset h >= 0 required")
    elif rel.height is not None:
        errs.append(f"{kind.value}: height only valid for OnTopOf")
    if rel.tau is not None:
        if kind not in DISTANCE_KINDS:
            errs.append(f"{kind.value}: tau only valid for distance relations")
        elif not (isinstance(rel.tau, (int, float)) and 0.0 <= rel.tau <= MAX_TAU):
            errs.append(f"tau {rel.tau!r} out of range [0, {MAX_TAU}]")
    if rel.angle is not None and not (isinstance(rel.angle, (int, float)) and math.isfinite(rel.angle)):
        errs.append(f"{kind.value}: angle must be finite")
    return errs


@dataclass(frozen=True)
class SemanticGroup:
    group_id: str
    members: tuple
    intra_relations: tuple = ()
    priority_key: tuple = (0.0, 0)

    def __post_init__(self):
        if not self.members:
            raise SchemaError(f"group {self.group_id} has no members")

    def to_dict(self) -> dict:
        return {"group_id": self.group_id, "members": list(self.members),
                "intra_relations": [r.to_dict() for r in self.intra_relations]}


def make_group(group_id, members, intra_relations, assets_by_id) -> SemanticGroup:
    members = tuple(sorted(members))
    try:
        largest = max(assets_by_id[m].footprint_area for m in members)
    except KeyError as exc:
        raise SchemaError(f"group {group_id} references unknown asset {exc.args[0]}") from None
    return SemanticGroup(group_id, members, tuple(intra_relations), (largest, len(members)))


def group_order(groups: Iterable[SemanticGroup]) -> list:
    """Placement order: largest member footprint first, then member count, then id."""
    return sorted(groups, key=lambda g: (-g.priority_key[0], -g.priority_key[1], g.group_id))


# ---------------------------------------------------------------------------
# backend payloads
# ---------------------------------------------------------------------------

_DESC_FLAGS = ("has_openable_part", "is_seat", "requires_frontal_access", "viewing_target")


def validate_backend_payload(raw) -> tuple:
    """Parse one per-asset backend reply.

    Returns ``(FunctionalDescription, InteractionPattern, [Relation, ...])`` or
    raises :class:`ValidationError` naming every violation. Nothing is
    accepted partially.
    """
    errors = []
    if isinstance(raw, (str, bytes)):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError([f"payload is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ValidationError(["payload must be a JSON object"])

    desc = None
    fd = raw.get("functional_description")
    if not isinstance(fd, dict):
        errors.append("functional_description: missing or not an object")
    else:
        if not isinstance(fd.get("summary"), str):
            errors.append("functional_description.summary: string required")
        for flag in _DESC_FLAGS:
            if not isinstance(fd.get(flag, False), bool):
                errors.append(f"functional_description.{flag}: boolean required")
        extra = set(fd) - {"summary", *_DESC_FLAGS}
        if extra:
            errors.append(f"functional_description: unknown fields {sorted(extra)}")

    pattern = None
    ip = raw.get("interaction_pattern")
    actions = []
    if not isinstance(ip, dict) or not isinstance(ip.get("top_actions"), list):
        errors.append("interaction_pattern.top_actions: list required")
    else:
        items = ip["top_actions"]
        if len(items) > MAX_ACTIONS:
            errors.append(f"top_actions exceeds {MAX_ACTIONS}")
        for k, item in enumerate(items):
            if not isinstance(item, dict) or not isinstance(item.get("action"), str):
                errors.append(f"top_actions[{k}].action: string required")
                continue
            conf = item.get("confidence")
            if conf is None:
                errors.append(f"top_actions[{k}].confidence: missing")
            elif isinstance(conf, bool) or not isinstance(conf, (int, float)) or not 0.0 <= conf <= 1.0:
                errors.append(f"top_actions[{k}].confidence: must be a number in [0, 1]")
            else:
                actions.append((item["action"], conf))
        confs = [c for _, c in actions]
        if any(b > a for a, b in zip(confs, confs[1:])):
            errors.append("top_actions: confidences must be non-increasing")

    relations = []
    raw_rels = raw.get("relations", [])
    if not isinstance(raw_rels, list):
        errors.append("relations: list required")
        raw_rels = []
    for k, r in enumerate(raw_rels):
        errors.extend(f"relations[{k}]: {msg}" for msg in _raw_relation_errors(r))

    if errors:
        raise ValidationError(errors)
    desc = FunctionalDescription(fd["summary"], *(fd.get(f, False) for f in _DESC_FLAGS))
    pattern = InteractionPattern(tuple(actions))
    relations = [Relation.from_dict(r) for r in raw_rels]
    return desc, pattern, relations


def _raw_relation_errors(r) -> list:
    if not isinstance(r, dict):
        return ["must be an object"]
    try:
        kind = RelationKind(r.get("kind"))
    except ValueError:
        return [f"unknown relation kind {r.get('kind')!r}"]
    if not isinstance(r.get("subject"), str):
        return ["subject: string required"]
    unknown = set(r) - {"id", "kind", "subject", "target", "wall", "angle", "height", "tau"}
    if unknown:
        return [f"unknown fields {sorted(unknown)}"]
    probe = _RelationProbe(kind, r["subject"], r.get("target"), r.get("wall"),
                           r.get("angle"), r.get("height"), r.get("tau"))
    return relation_errors(probe)


@dataclass
class _RelationProbe:
    kind: RelationKind
    subject: Any
    target: Any
    wall: Any
    angle: Any
    height: Any
    tau: Any


def serialize_payload(desc: FunctionalDescription, pattern: InteractionPattern,
                      relations: Sequence[Relation], asset_id: Optional[str] = None) -> dict:
    d = {}
    if asset_id is not None:
        d["asset_id"] = asset_id
    d["functional_description"] = desc.to_dict()
    d["interaction_pattern"] = pattern.to_dict()
    d["relations"] = [r.to_dict() for r in relations]
    return d


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

@dataclass
class InferenceResult:
    groups: list
    inter_relations: list
    descriptions: dict = field(default_factory=dict)   # asset id -> (desc, pattern)
    conflicts: list = field(default_factory=list)


def infer_relations(scene: Sequence[ObjectAsset], room: Room, backend) -> tuple:
    """Run a backend and return ``(groups, inter_relations)``."""
    ids = [a.id for a in scene]
    if len(set(ids)) != len(ids):
        raise SchemaError("asset ids must be unique")
    result = backend.infer(list(scene), room)
    check_relation_refs(scene, result.groups, result.inter_relations)
    return result.groups, result.inter_relations


def check_relation_refs(assets, groups, inter_relations) -> None:
    ids = {a.id for a in assets}
    seen = {}
    for g in groups:
        for m in g.members:
            if m not in ids:
                raise SchemaError(f"group {g.group_id} references unknown asset {m}")
            if m in seen:
                raise SchemaError(f"asset {m} is in groups {seen[m]} and {g.group_id}")
            seen[m] = g.group_id
    missing = ids - set(seen)
    if missing:
        raise SchemaError(f"assets not grouped: {sorted(missing)}")
    for rel in [r for g in groups for r in g.intra_relations] + list(inter_relations):
        for p in rel.participants:
            if p not in ids:
                raise SchemaError(f"relation {rel.id} references unknown asset {p}")


def detect_conflicts(relations: Iterable[Relation]) -> list:
    """Pairs of relations that pull one subject in incompatible directions.

    Conflicts are reported, never resolved here.
    """
    by_subject = {}
    for r in relations:
        by_subject.setdefault(r.subject, []).append(r)
    out = []
    for subj in sorted(by_subject):
        rels = by_subject[subj]
        walls = [r for r in rels if r.kind == RelationKind.AGAINST_WALL]
        if len({r.wall for r in walls}) > 1:
            out.append({"subject": subj, "relations": [r.id for r in walls],
                        "reason": "against several walls"})
        facing = [r for r in rels if r.kind in (RelationKind.POINT_TOWARDS, RelationKind.FACING_ACCESS)]
        if walls and facing:
            out.append({"subject": subj, "relations": [walls[0].id, facing[0].id],
                        "reason": "wall fixes orientation that a facing relation also sets"})
        stacked = [r for r in rels if r.kind == RelationKind.ON_TOP_OF]
        others = [r for r in rels if r.kind in DISTANCE_KINDS or r.kind == RelationKind.AGAINST_WALL]
        if stacked and others:
            out.append({"subject": subj, "relations": [stacked[0].id, others[0].id],
                        "reason": "stacked object also placed on the floor plan"})
    return out


def resolve_conflicts(relations: list, conflicts: list, priority: Sequence[str]) -> list:
    """Drop the lower-priority relation of each conflict; no-op without a priority list."""
    if not priority:
        return list(relations)
    rank = {k: i for i, k in enumerate(priority)}
    by_id = {r.id: r for r in relations}
    dropped = set()
    for c in conflicts:
        rels = [by_id[i] for i in c["relations"] if i in by_id]
        if len(rels) < 2:
            continue
        rels.sort(key=lambda r: (rank.get(r.kind.value, len(rank)), r.id))
        dropped.update(r.id for r in rels[1:])
    return [r for r in relations if r.id not in dropped]


def load_lexicon(path=None) -> dict:
    if path is None:
        text = resources.files("anthrolayout").joinpath("data/lexicon.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


class RuleBackend:
    """Deterministic relation inference from a category lexicon.

    Seats attach to the least-loaded compatible anchor (nearest one within
    ``proximity_threshold`` when assets carry initial poses), openable storage
    gets an operational clearance toward a wall-bound work anchor and shares
    its wall, and screens point toward their seating anchor.
    """

    def __init__(self, lexicon: Optional[dict] = None, proximity_threshold: float = 1.5):
        self.lexicon = lexicon if lexicon is not None else load_lexicon()
        self.proximity_threshold = proximity_threshold

    def entry(self, asset: ObjectAsset) -> dict:
        cats = self.lexicon["categories"]
        return cats.get(asset.category, cats.get("_default", {"role": "free"}))

    def describe(self, asset: ObjectAsset) -> tuple:
        e = self.entry(asset)
        role = e.get("role", "free")
        op = asset.operational_class
        desc = FunctionalDescription(
            summary=e.get("summary", f"{asset.category} ({role})"),
            has_openable_part=op == "storage",
            is_seat=op == "seat" or role == "seat",
            requires_frontal_access=bool(e.get("frontal_access", op is not None)),
            viewing_target=role == "screen",
        )
        actions = e.get("actions", [])[:MAX_ACTIONS]
        # lexicon actions are ranked; confidences decay linearly with rank
        pattern = InteractionPattern(tuple((a, round(1.0 - 0.15 * k, 2)) for k, a in enumerate(actions)))
        return desc, pattern

    def infer(self, assets: Sequence[ObjectAsset], room: Room) -> InferenceResult:
        assets = sorted(assets, key=lambda a: a.id)
        by_id = {a.id: a for a in assets}
        roles = {a.id: self.entry(a).get("role", "free") for a in assets}

        anchors = [a for a in assets if roles[a.id] == "anchor"]
        attached = {a.id: [] for a in anchors}
        owner = {}
        for a in assets:
            e = self.entry(a)
            if roles[a.id] not in ("seat", "satellite", "on_top"):
                continue
            allowed = [x for x in anchors if x.category in e.get("anchors", [])]
            cap = {x.id: self.entry(x).get("capacity", {}).get(roles[a.id], 1 if roles[a.id] != "satellite" else 2)
                   for x in allowed}
            free = [x for x in allowed if sum(1 for y in attached[x.id] if roles[y] == roles[a.id]) < cap[x.id]]
            if not free:
                continue
            pick = self._pick_anchor(a, free, attached)
            attached[pick.id].append(a.id)
            owner[a.id] = pick.id

        groups_members = {}
        for x in anchors:
            groups_members[x.id] = [x.id] + attached[x.id]
        for a in assets:
            if roles[a.id] != "anchor" and a.id not in owner:
                groups_members[a.id] = [a.id]

        intra = {gid: [] for gid in groups_members}
        for a in assets:
            if a.id not in owner:
                continue
            anchor = owner[a.id]
            role = roles[a.id]
            if role == "seat":
                intra[anchor].append(Relation(RelationKind.FACING_ACCESS, a.id, anchor))
                # a single seat sits across the anchor's front; shared anchors let seats spread around
                if self.entry(by_id[anchor]).get("capacity", {}).get("seat", 1) == 1:
                    intra[anchor].append(Relation(RelationKind.ALIGN_WITH, a.id, anchor, angle=math.pi))
            elif role == "satellite":
                kind = RelationKind(self.entry(a).get("relation", "AdjacentUse"))
                intra[anchor].append(Relation(kind, a.id, anchor))
                intra[anchor].append(Relation(RelationKind.ALIGN_WITH, a.id, anchor, angle=0.0))
            elif role == "on_top":
                intra[anchor].append(Relation(RelationKind.ON_TOP_OF, a.id, anchor, height=0.0))

        groups = [make_group(f"g_{gid}", members, intra[gid], by_id)
                  for gid, members in groups_members.items()]
        ordered = group_order(groups)

        inter = []
        # operational items attach round-robin to wall-bound work anchors and share their wall
        work = [m for g in ordered for m in g.members
                if roles[m] == "anchor" and self.entry(by_id[m]).get("work_anchor", False)]
        walled_work = [m for m in work if self.entry(by_id[m]).get("against_wall", False)]
        pool = walled_work or work
        op_target = {}
        k = 0
        for g in ordered:
            for m in g.members:
                if roles[m] in ("storage", "operational") and m not in owner and pool:
                    op_target[m] = pool[k % len(pool)]
                    k += 1

        used = [0.0, 0.0, 0.0, 0.0]
        wall_len = [room.width, room.depth, room.width, room.depth]
        wall_of = {}
        placement = [m for g in ordered for m in g.members]
        # items with a clearance target go second so their target's wall is known
        for m in sorted(placement, key=lambda m: m in op_target):
            a = by_id[m]
            if not self.entry(a).get("against_wall", False) or m in owner:
                continue
            if op_target.get(m) in wall_of:
                w = wall_of[op_target[m]]
            else:
                w = min(range(4), key=lambda k: (used[k] / wall_len[k], k))
            used[w] += a.width
            wall_of[m] = w
        for m in placement:
            if m in wall_of:
                inter.append(Relation(RelationKind.AGAINST_WALL, m, wall=wall_of[m]))

        for g in ordered:
            for m in g.members:
                a = by_id[m]
                e = self.entry(a)
                if m in op_target:
                    inter.append(Relation(RelationKind.OPERATIONAL_CLEARANCE, m, op_target[m]))
                elif roles[m] == "screen":
                    target = next((x.id for g2 in ordered for x in (by_id[i] for i in g2.members)
                                   if roles[x.id] == "anchor" and x.category in e.get("targets", [])), None)
                    if target is not None:
                        inter.append(Relation(RelationKind.POINT_TOWARDS, m, target, angle=0.0))
        pairs = {tuple(p) for p in self.lexicon.get("passage_pairs", [])}
        anchor_order = [m for g in ordered for m in g.members if roles[m] == "anchor"]
        for i, p in enumerate(anchor_order):
            for q in anchor_order[i + 1:]:
                if (by_id[p].category, by_id[q].category) in pairs or (by_id[q].category, by_id[p].category) in pairs:
                    inter.append(Relation(RelationKind.CLEARANCE_PASSAGE, q, p))

        descriptions = {a.id: self.describe(a) for a in assets}
        all_rels = [r for g in ordered for r in g.intra_relations] + inter
        return InferenceResult(ordered, inter, descriptions, detect_conflicts(all_rels))

    def _pick_anchor(self, a, free, attached):
        if a.initial_pose is not None:
            near = []
            for x in free:
                if x.initial_pose is None:
                    continue
                d = math.hypot(a.initial_pose.x - x.initial_pose.x, a.initial_pose.y - x.initial_pose.y)
                gap = d - math.hypot(a.half_width, a.half_depth) - math.hypot(x.half_width, x.half_depth)
                if gap <= self.proximity_threshold:
                    near.append((gap, x.id, x))
            if near:
                return min(near)[2]
        return min(free, key=lambda x: (len(attached[x.id]), x.id))


class RemoteBackend:
    """Relation inference over HTTP.

    One POST per asset with ``stage="describe"`` returns a per-asset payload;
    a final POST with ``stage="group"`` returns ``{"groups": [...],
    "inter_relations": [...]}``. Endpoint, timeout and retry count default to
    ``ANTHROLAYOUT_BACKEND_URL``, ``ANTHROLAYOUT_BACKEND_TIMEOUT`` and
    ``ANTHROLAYOUT_BACKEND_RETRIES``.
    """

    def __init__(self, endpoint=None, timeout=None, retries=None, criteria="", backoff=0.2):
        self.endpoint = endpoint or os.environ.get("ANTHROLAYOUT_BACKEND_URL")
        if not self.endpoint:
            raise InferenceError("no backend endpoint configured", retryable=False)
        self.timeout = float(timeout if timeout is not None
                             else os.environ.get("ANTHROLAYOUT_BACKEND_TIMEOUT", 30))
        self.retries = int(retries if retries is not None
                           else os.environ.get("ANTHROLAYOUT_BACKEND_RETRIES", 2))
        self.criteria = criteria
        self.backoff = backoff

    def _post(self, body: dict, asset_id=None) -> dict:
        data = json.dumps(body, sort_keys=True).encode()
        last = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(self.endpoint, data=data,
                                         headers={"Content-Type": "application/json"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    text = resp.read()
                try:
                    return json.loads(text)
                except json.JSONDecodeError as exc:
                    raise InferenceError(f"protocol error: reply is not JSON ({exc})",
                                         asset_id=asset_id) from None
            except urllib.error.HTTPError as exc:
                last = f"HTTP {exc.code}"
                if exc.code < 500:
                    raise InferenceError(f"backend rejected request: {last}", asset_id=asset_id,
                                         retryable=False) from None
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last = f"{type(exc).__name__}: {exc}"
            logger.warning("backend attempt %d failed for %s: %s", attempt + 1, asset_id, last)
            if attempt < self.retries:
                time.sleep(self.backoff * (attempt + 1))
        raise InferenceError(f"backend unavailable after {self.retries + 1} attempts: {last}",
                             asset_id=asset_id)

    def infer(self, assets: Sequence[ObjectAsset], room: Room) -> InferenceResult:
        assets = sorted(assets, key=lambda a: a.id)
        by_id = {a.id: a for a in assets}
        descriptions = {}
        per_asset = []
        for a in assets:
            reply = self._post({"stage": "describe", "assets": [a.to_dict()], "room": room.to_dict(),
                                "image_refs": list(a.image_refs), "criteria": self.criteria}, a.id)
            try:
                desc, pattern, rels = validate_backend_payload(reply)
            except ValidationError as exc:
                raise ValidationError([f"asset {a.id}: {e}" for e in exc.errors]) from None
            descriptions[a.id] = (desc, pattern)
            per_asset.extend(rels)
        reply = self._post({"stage": "group", "assets": [a.to_dict() for a in assets],
                            "room": room.to_dict(), "image_refs": [], "criteria": self.criteria,
                            "relations": [r.to_dict() for r in per_asset]})
        groups, inter = parse_grouping(reply, by_id)
        all_rels = [r for g in groups for r in g.intra_relations] + inter
        return InferenceResult(group_order(groups), inter, descriptions, detect_conflicts(all_rels))


def parse_grouping(reply, assets_by_id) -> tuple:
    errors = []
    if not isinstance(reply, dict) or not isinstance(reply.get("groups"), list):
        raise ValidationError(["groups: list required"])
    groups = []
    for k, g in enumerate(reply["groups"]):
        try:
            rels = [Relation.from_dict(r) for r in g.get("intra_relations", [])]
            groups.append(make_group(str(g["group_id"]), g["members"], rels, assets_by_id))
        except (SchemaError, KeyError, TypeError, AttributeError) as exc:
            errors.append(f"groups[{k}]: {exc}")
    inter = []
    for k, r in enumerate(reply.get("inter_relations", [])):
        try:
            inter.append(Relation.from_dict(r))
        except SchemaError as exc:
            errors.append(f"inter_relations[{k}]: {exc}")
    if errors:
        raise ValidationError(errors)
    return groups, inter
