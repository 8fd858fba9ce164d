"""On-disk formats: scene input, layout output, run manifests."""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .errors import SchemaError, VersionMismatchError
from .geometry import Pose, Room
from .relations import ObjectAsset, Relation, check_relation_refs, make_group

SCENE_FORMAT = "anthrolayout.scene"
LAYOUT_FORMAT = "anthrolayout.layout"
MANIFEST_FORMAT = "anthrolayout.manifest"
FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


def atomic_write(path, data) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_header(d: dict, expected: str):
    if not isinstance(d, dict):
        raise SchemaError(f"{expected}: top level must be an object")
    fmt = d.get("format", expected)
    if fmt != expected:
        raise SchemaError(f"expected format {expected!r}, got {fmt!r}")
    ver = d.get("format_version", FORMAT_VERSION)
    if ver != FORMAT_VERSION:
        raise VersionMismatchError(f"{expected} version {ver} is not supported (need {FORMAT_VERSION})")


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scene:
    name: str
    room: Room
    assets: tuple
    criteria: str = ""
    groups: Optional[tuple] = None           # explicit relations, if given
    inter_relations: tuple = ()
    extra: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        ids = [a.id for a in self.assets]
        if len(set(ids)) != len(ids):
            raise SchemaError("asset ids must be unique")
        if self.groups is not None:
            check_relation_refs(self.assets, self.groups, self.inter_relations)

    @property
    def has_relations(self) -> bool:
        return self.groups is not None

    def to_dict(self) -> dict:
        d = {"format": SCENE_FORMAT, "format_version": FORMAT_VERSION, "name": self.name,
             "room": self.room.to_dict(), "criteria": self.criteria,
             "assets": [a.to_dict() for a in self.assets]}
        if self.groups is not None:
            d["relations"] = {"groups": [g.to_dict() for g in self.groups],
                              "inter_relations": [r.to_dict() for r in self.inter_relations]}
        return d


def room_from_dict(d) -> Room:
    try:
        return Room(float(d["width"]), float(d["depth"]), float(d.get("height", 2.5)))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed room {d!r}: {exc}") from None


def scene_from_dict(d: dict) -> Scene:
    _check_header(d, SCENE_FORMAT)
    if "room" not in d or "assets" not in d:
        raise SchemaError("scene needs 'room' and 'assets'")
    room = room_from_dict(d["room"])
    assets = tuple(ObjectAsset.from_dict(a) for a in d["assets"])
    groups = None
    inter = ()
    if d.get("relations") is not None:
        rel = d["relations"]
        by_id = {a.id: a for a in assets}
        try:
            groups = tuple(make_group(g["group_id"], g["members"],
                                      [Relation.from_dict(r) for r in g.get("intra_relations", [])], by_id)
                           for g in rel["groups"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed relations block: {exc}") from None
        inter = tuple(Relation.from_dict(r) for r in rel.get("inter_relations", []))
    return Scene(str(d.get("name", "scene")), room, assets, str(d.get("criteria", "")), groups, inter)


def load_scene(path) -> Scene:
    with open(path) as fh:
        try:
            return scene_from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from None


def bundled_scene_path(name: str) -> Path:
    """Path of a scene shipped with the package (``office``, ``desk_corner``, ``studio``)."""
    p = resources.files("anthrolayout").joinpath(f"data/scenes/{name}.json")
    if not p.is_file():
        raise SchemaError(f"no bundled scene named {name!r}")
    return Path(str(p))


def bundled_profile_path() -> Path:
    return Path(str(resources.files("anthrolayout").joinpath("data/profile_example.json")))


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------

def layout_to_dict(layout, manifest: Optional[dict] = None) -> dict:
    diag = {"seed": layout.seed, "config_hash": layout.config_hash,
            "total_penalty": layout.total_penalty, "term_values": list(layout.term_values)}
    diag.update(layout.diagnostics)
    d = {"format": LAYOUT_FORMAT, "format_version": FORMAT_VERSION,
         "units": {"length": "m", "angle": "rad"},
         "room": layout.room.to_dict(),
         "assets": [{"id": a.id, "category": a.category, "width": a.width, "depth": a.depth,
                     "height": a.height, "movable_parts": [m.to_dict() for m in a.movable_parts],
                     "x": p.x, "y": p.y, "z_base": p.z_base, "yaw": p.yaw}
                    for a, p in zip(layout.assets, layout.poses)],
         "diagnostics": diag}
    if manifest is not None:
        d["manifest"] = manifest
        d["manifest_hash"] = manifest_hash(manifest)
    return d


@dataclass
class LoadedLayout:
    """A layout read back from disk: enough for every metric."""

    assets: tuple
    poses: tuple
    room: Room
    diagnostics: dict = field(default_factory=dict)
    manifest: Optional[dict] = None

    def footprints(self) -> list:
        return [a.footprint(p) for a, p in zip(self.assets, self.poses)]

    def pose_of(self, asset_id: str) -> Pose:
        for a, p in zip(self.assets, self.poses):
            if a.id == asset_id:
                return p
        raise KeyError(asset_id)


def layout_from_dict(d: dict) -> LoadedLayout:
    _check_header(d, LAYOUT_FORMAT)
    try:
        room = room_from_dict(d["room"])
        assets, poses = [], []
        for e in d["assets"]:
            assets.append(ObjectAsset.from_dict({k: e[k] for k in e if k not in ("x", "y", "z_base", "yaw")}
                                                | {"category": e.get("category", "object"),
                                                   "height": e.get("height", 1.0)}))
            poses.append(Pose(float(e["x"]), float(e["y"]), float(e["yaw"]), float(e.get("z_base", 0.0))))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed layout: {exc}") from None
    return LoadedLayout(tuple(assets), tuple(poses), room, d.get("diagnostics", {}), d.get("manifest"))


def load_layout(path) -> LoadedLayout:
    with open(path) as fh:
        return layout_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def manifest_hash(manifest: dict) -> str:
    return sha256_bytes(json.dumps(manifest, sort_keys=True).encode())[:16]


def make_manifest(*, scene_path, mode, profile_source, seed, overrides, version, inputs) -> dict:
    """Everything needed to re-run ``generate``. ``inputs`` maps paths to files to hash."""
    return {"format": MANIFEST_FORMAT, "format_version": FORMAT_VERSION,
            "scene": str(scene_path), "mode": mode, "profile_source": profile_source,
            "seed": seed, "config_overrides": overrides, "tool_version": version,
            "content_hashes": {k: sha256_file(v) for k, v in sorted(inputs.items())}}
