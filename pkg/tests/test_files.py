import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anthrolayout.errors import SchemaError, VersionMismatchError
from anthrolayout.files import (atomic_write, bundled_scene_path, canonical_json, layout_from_dict,
                                layout_to_dict, load_scene, make_manifest, manifest_hash, scene_from_dict)
from anthrolayout.geometry import normalize_yaw


@pytest.mark.parametrize("name", ["office", "desk_corner", "studio"])
def test_bundled_scene_roundtrip(name):
    scene = load_scene(bundled_scene_path(name))
    again = scene_from_dict(json.loads(json.dumps(scene.to_dict())))
    assert again == scene
    assert again.to_dict() == scene.to_dict()


def test_scene_errors():
    with pytest.raises(SchemaError, match="no bundled scene"):
        bundled_scene_path("castle")
    with pytest.raises(VersionMismatchError):
        scene_from_dict({"format": "anthrolayout.scene", "format_version": 2, "room": {}, "assets": []})
    with pytest.raises(SchemaError, match="expected format"):
        scene_from_dict({"format": "anthrolayout.layout", "room": {}, "assets": []})
    with pytest.raises(SchemaError, match="unique"):
        a = {"id": "x", "category": "box", "width": 1, "depth": 1, "height": 1}
        scene_from_dict({"room": {"width": 3, "depth": 3}, "assets": [a, a]})
    with pytest.raises(SchemaError, match="malformed room"):
        scene_from_dict({"room": {"width": 3}, "assets": []})


def test_malformed_json_scene(tmp_path):
    p = tmp_path / "s.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError, match="s.json"):
        load_scene(p)


_finite = st.floats(-50, 50, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(_finite, _finite, st.floats(-math.pi, math.pi), st.floats(0.1, 3), st.floats(0.1, 3)),
                max_size=6))
def test_layout_roundtrip(items):
    doc = {"format": "anthrolayout.layout", "format_version": 1,
           "room": {"width": 5.0, "depth": 4.0, "height": 2.5},
           "assets": [{"id": f"a{k}", "category": "box", "width": w, "depth": d, "height": 0.7,
                       "movable_parts": [], "x": x, "y": y, "z_base": 0.0, "yaw": yaw}
                      for k, (x, y, yaw, w, d) in enumerate(items)]}
    loaded = layout_from_dict(json.loads(canonical_json(doc)))
    assert [(p.x, p.y, p.yaw) for p in loaded.poses] == [(x, y, normalize_yaw(yaw)) for x, y, yaw, _, _ in items]
    assert [(a.width, a.depth) for a in loaded.assets] == [(w, d) for _, _, _, w, d in items]


def test_layout_version_mismatch():
    with pytest.raises(VersionMismatchError):
        layout_from_dict({"format": "anthrolayout.layout", "format_version": 3, "room": {}, "assets": []})
    with pytest.raises(SchemaError, match="malformed layout"):
        layout_from_dict({"format": "anthrolayout.layout", "room": {"width": 2, "depth": 2},
                          "assets": [{"id": "a", "width": 1, "depth": 1}]})


def test_layout_to_dict_embeds_manifest():
    from anthrolayout.anthropometry import load_profile
    from anthrolayout.files import bundled_profile_path
    from anthrolayout.optimizer import OptimizerConfig, optimize_scene

    scene = load_scene(bundled_scene_path("desk_corner"))
    layout = optimize_scene(scene.assets, scene.groups, scene.inter_relations,
                            load_profile(bundled_profile_path()), scene.room, OptimizerConfig(iterations=10))
    manifest = {"seed": 0}
    d = layout_to_dict(layout, manifest)
    assert d["manifest_hash"] == manifest_hash(manifest)
    back = layout_from_dict(json.loads(canonical_json(d)))
    assert back.poses == tuple(layout.poses)
    assert back.manifest == manifest


def test_canonical_json():
    assert canonical_json({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    with pytest.raises(ValueError):
        canonical_json({"x": float("nan")})


def test_atomic_write(tmp_path):
    target = tmp_path / "sub" / "f.txt"
    atomic_write(target, "one")
    atomic_write(target, b"two")
    assert target.read_bytes() == b"two"
    assert [p.name for p in target.parent.iterdir()] == ["f.txt"]


def test_atomic_write_leaves_old_file_on_failure(tmp_path):
    target = tmp_path / "f.txt"
    atomic_write(target, "keep")
    with pytest.raises(TypeError):
        atomic_write(target, 12)
    assert target.read_text() == "keep"
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]


def test_manifest_hash_and_content_hashes(tmp_path):
    f = tmp_path / "in.json"
    f.write_text("{}")
    m = make_manifest(scene_path="office", mode="HO", profile_source=None, seed=1, overrides={},
                      version="0.1.0", inputs={"scene": f})
    assert m["content_hashes"]["scene"] == "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
    assert manifest_hash(m) == manifest_hash(json.loads(json.dumps(m)))
    assert manifest_hash(m) != manifest_hash(m | {"seed": 2})
    assert len(manifest_hash(m)) == 16
