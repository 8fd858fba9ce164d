import math

import numpy as np
import pytest

from anthrolayout.anthropometry import load_profile
from anthrolayout.constraints import CompileConfig, ConstraintProgram, PenaltyTerm, TermKind, compile_program
from anthrolayout.constraints.program import eval_program
from anthrolayout.errors import ConfigurationError, InfeasibleSceneError, OptimizationError
from anthrolayout.files import bundled_profile_path, bundled_scene_path, load_scene
from anthrolayout.geometry import Room, normalize_yaw
from anthrolayout.optimizer import (OptimizerConfig, candidate_key, initialize, optimize_group, optimize_scene,
                                    select_candidate, step_scale)
from anthrolayout.relations import ObjectAsset, RuleBackend, infer_relations, make_group

PROFILE = load_profile(bundled_profile_path())
ROOM = Room(5.5, 5.5)


def box(aid, w=0.8, d=0.6):
    return ObjectAsset(aid, "box", w, d, 0.8)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        OptimizerConfig(iterations=0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(lr_position=-1.0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig(candidate_count=0)
    with pytest.raises(ConfigurationError):
        OptimizerConfig.from_dict({"learning_rate": 0.1})
    assert OptimizerConfig.from_dict(OptimizerConfig().to_dict()) == OptimizerConfig()


def test_step_scale_schedules():
    c = OptimizerConfig(lr_schedule="constant")
    assert step_scale(c, 399, 400) == 1.0
    tail = OptimizerConfig(lr_schedule="cosine_tail", anneal_fraction=0.25)
    assert step_scale(tail, 300, 400) == 1.0
    assert step_scale(tail, 350, 400) == pytest.approx(0.5)
    assert step_scale(OptimizerConfig(lr_schedule="cosine"), 200, 400) == pytest.approx(0.5)


# ---------------------------------------------------------------------------
# initialize
# ---------------------------------------------------------------------------

def test_initialize_deterministic():
    assets = [box("a"), box("b", 1.2, 0.4)]
    np.testing.assert_array_equal(initialize(assets, ROOM, 7), initialize(assets, ROOM, 7))
    assert not np.array_equal(initialize(assets, ROOM, 7), initialize(assets, ROOM, 8))


def test_initialize_within_inset():
    rng = np.random.default_rng(0)
    assets = [box(f"a{k}", *rng.uniform(0.2, 2.0, 2)) for k in range(10_000)]
    P = initialize(assets, ROOM, 3)
    r = np.array([math.hypot(a.half_width, a.half_depth) for a in assets])
    assert (P[:, 0] >= r).all() and (P[:, 0] <= ROOM.width - r).all()
    assert (P[:, 1] >= r).all() and (P[:, 1] <= ROOM.depth - r).all()
    quarter = np.round(P[:, 2] / (math.pi / 2))
    assert np.abs(P[:, 2] - quarter * math.pi / 2).max() <= 0.1


def test_initialize_infeasible():
    big = box("huge", 6 / math.sqrt(2), 6 / math.sqrt(2))   # bounding radius 3.0
    with pytest.raises(InfeasibleSceneError, match="huge"):
        initialize([big], ROOM, 0)


def test_select_candidate_all_infeasible():
    big = box("huge", 6 / math.sqrt(2), 6 / math.sqrt(2))
    g = make_group("g", ["huge"], [], {"huge": big})
    with pytest.raises(OptimizationError) as exc:
        select_candidate([big], [g], [], PROFILE, ROOM, OptimizerConfig(iterations=5, candidate_count=3))
    assert len(exc.value.diagnostics) == 3


# ---------------------------------------------------------------------------
# optimize_group
# ---------------------------------------------------------------------------

def pair_program(params, frozen=frozenset({1})):
    return ConstraintProgram((box("a"), box("b")), ROOM, (PenaltyTerm("Distance", (0, 1), params),),
                             frozen=frozenset(frozen))


def test_zero_violation_start_unchanged():
    prog = pair_program({"d_min": 1.0, "d_max": 2.0})
    P = np.array([[1.0, 2.0, 0.3], [2.5, 2.0, 0.0]])
    res = optimize_group(prog, P, [0], OptimizerConfig(iterations=50))
    np.testing.assert_allclose(res.poses, P, atol=1e-9)


def test_one_dimensional_distance_converges():
    prog = pair_program({"d_min": 2.0, "d_max": 2.1})
    P = np.array([[2.0, 2.0, 0.0], [3.0, 2.0, 0.0]])
    cfg = OptimizerConfig(iterations=400, lr_position=0.01, lr_schedule="constant")
    res = optimize_group(prog, P, [0], cfg)
    d = math.dist(res.poses[0, :2], res.poses[1, :2])
    assert 2.0 <= d <= 2.1
    assert res.final_total == 0.0


def test_frozen_pose_bitwise_unchanged():
    prog = pair_program({"d_min": 2.0, "d_max": 2.1})
    P = np.array([[2.0, 2.0, 0.0], [3.1, 2.7, 0.4]])
    res = optimize_group(prog, P, [0, 1], OptimizerConfig(iterations=100))
    assert res.poses[1].tobytes() == P[1].tobytes()


def test_best_iterate_never_worse():
    scene = load_scene(bundled_scene_path("office"))
    layout = optimize_scene(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room,
                            OptimizerConfig(iterations=80))
    for g in layout.diagnostics["groups"]:
        assert g["final_total"] <= g["initial_total"]


def test_non_finite_penalty_names_term():
    prog = pair_program({"d_min": 1e200, "d_max": 1e200})
    with pytest.raises(OptimizationError, match="Distance term #0"):
        optimize_group(prog, np.array([[1.0, 1.0, 0.0], [2.0, 1.0, 0.0]]), [0], OptimizerConfig(iterations=3))


# ---------------------------------------------------------------------------
# optimize_scene / select_candidate
# ---------------------------------------------------------------------------

def test_single_group_scene_matches_optimize_group():
    a, b = box("a"), box("b")
    g = make_group("g", ["a", "b"], [], {"a": a, "b": b})
    cfg = OptimizerConfig(iterations=60, seed=5)
    layout = optimize_scene([a, b], [g], [], PROFILE, ROOM, cfg)
    prog = compile_program([g], [], [a, b], PROFILE, ROOM)
    res = optimize_group(prog, initialize(prog.assets, ROOM, 5), [0, 1], cfg, CompileConfig())
    expected = [[x, y, normalize_yaw(t)] for x, y, t in res.poses]
    np.testing.assert_array_equal(layout.pose_matrix(), expected)


def test_disjoint_groups_do_not_collide():
    a, b = box("a", 1.5, 1.0), box("b", 1.5, 1.0)
    groups = [make_group("ga", ["a"], [], {"a": a}), make_group("gb", ["b"], [], {"b": b})]
    for seed in range(3):
        layout = optimize_scene([a, b], groups, [], PROFILE, ROOM, OptimizerConfig(iterations=200, seed=seed))
        coll = [v for t, v in zip(layout.program.terms, layout.term_values) if t.kind is TermKind.COLLISION]
        assert coll == [0.0]


def test_permuting_assets_gives_identical_layout():
    scene = load_scene(bundled_scene_path("office"))
    cfg = OptimizerConfig(iterations=40, seed=2)
    a = optimize_scene(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room, cfg)
    b = optimize_scene(tuple(reversed(scene.assets)), tuple(reversed(scene.groups)), scene.inter_relations,
                       PROFILE, scene.room, cfg)
    assert a.poses == b.poses and a.total_penalty == b.total_penalty


def test_scene_is_deterministic():
    scene = load_scene(bundled_scene_path("office"))
    cfg = OptimizerConfig(iterations=40, seed=9)
    a = optimize_scene(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room, cfg)
    b = optimize_scene(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room, cfg)
    assert a.poses == b.poses and a.term_values == b.term_values


def test_iterations_scope_scene_splits_budget():
    scene = load_scene(bundled_scene_path("office"))
    cfg = OptimizerConfig(iterations=60, iterations_scope="scene")
    layout = optimize_scene(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room, cfg)
    assert layout.diagnostics["iterations_per_group"] == math.ceil(60 / len(scene.groups))


def test_single_candidate_matches_optimize_scene():
    scene = load_scene(bundled_scene_path("desk_corner"))
    cfg = OptimizerConfig(iterations=60, candidate_count=1, seed=4)
    best = select_candidate(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room, cfg)
    one = optimize_scene(scene.assets, scene.groups, scene.inter_relations, PROFILE, scene.room, cfg)
    assert best.poses == one.poses and best.seed == 4


def test_candidate_tie_break():
    scores = [0.8, 1.0, 0.9, 1.0, 0.7]
    totals = [1.0, 5.0, 2.0, 3.0, 0.5]
    keys = [candidate_key(s, t, seed) for seed, (s, t) in enumerate(zip(scores, totals))]
    assert min(range(5), key=lambda k: keys[k]) == 3
    assert min([candidate_key(1.0, 2.0, 4), candidate_key(1.0, 2.0, 1)]) == candidate_key(1.0, 2.0, 1)


def test_studio_reaches_feasibility():
    scene = load_scene(bundled_scene_path("studio"))
    groups, inter = infer_relations(scene.assets, scene.room, RuleBackend())
    ok = 0
    for seed in range(5):
        layout = optimize_scene(scene.assets, groups, inter, PROFILE, scene.room, OptimizerConfig(seed=seed))
        phys = sum(v for t, v in zip(layout.program.terms, layout.term_values)
                   if t.kind in (TermKind.COLLISION, TermKind.BOUNDARY))
        ok += phys < 1e-6
    assert len(scene.assets) == 6
    assert ok >= 4
