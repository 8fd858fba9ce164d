"""Sequential per-group pose optimization with multi-seed candidate selection."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anthropometry import AnthropometricProfile
from .constraints import CompileConfig, ConstraintProgram, adaptive_weights, compile_program, eval_program
from .errors import ConfigurationError, InfeasibleSceneError, LayoutError, OptimizationError
from .geometry import Pose, Room
from .relations import ObjectAsset, SemanticGroup, group_order

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    iterations: int = 400
    lr_position: float = 0.05
    lr_yaw: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    candidate_count: int = 5
    iterations_scope: str = "group"   # "group": per group; "scene": split across groups
    yaw_noise: float = 0.1
    lr_schedule: str = "cosine_tail"  # "constant", "cosine", or "cosine_tail"
    anneal_fraction: float = 0.25     # share of steps annealed by "cosine_tail"

    def __post_init__(self):
        if self.iterations <= 0:
            raise ConfigurationError("iterations must be > 0")
        if self.lr_position <= 0 or self.lr_yaw <= 0:
            raise ConfigurationError("step sizes must be > 0")
        if self.candidate_count < 1:
            raise ConfigurationError("candidate_count must be >= 1")
        if self.iterations_scope not in ("group", "scene"):
            raise ConfigurationError("iterations_scope must be 'group' or 'scene'")
        if self.lr_schedule not in ("constant", "cosine", "cosine_tail"):
            raise ConfigurationError("lr_schedule must be 'constant', 'cosine' or 'cosine_tail'")
        if not 0.0 < self.anneal_fraction <= 1.0:
            raise ConfigurationError("anneal_fraction must be in (0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown optimizer config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def config_hash(config: OptimizerConfig, compile_config: CompileConfig) -> str:
    blob = json.dumps({"optimizer": config.to_dict(), "constraints": compile_config.to_dict()},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SceneLayout:
    assets: tuple
    poses: tuple
    room: Room
    seed: int
    config_hash: str = ""
    total_penalty: float = 0.0
    term_values: tuple = ()
    diagnostics: dict = field(default_factory=dict)
    program: Optional[ConstraintProgram] = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.poses) != len(self.assets):
            raise ValueError("pose count must equal asset count")

    def pose_of(self, asset_id: str) -> Pose:
        for a, p in zip(self.assets, self.poses):
            if a.id == asset_id:
                return p
        raise KeyError(asset_id)

    def pose_matrix(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.yaw] for p in self.poses], dtype=float).reshape(-1, 3)

    def footprints(self) -> list:
        return [a.footprint(p) for a, p in zip(self.assets, self.poses)]


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def initialize(assets: Sequence[ObjectAsset], room: Room, seed: int, yaw_noise: float = 0.1) -> np.ndarray:
    """Random start poses, one row ``(x, y, yaw)`` per asset in the given order.

    Centers are uniform in the room inset by each asset's bounding-circle
    radius; yaw is a random quarter turn plus uniform noise.
    """
    rng = np.random.default_rng(seed)
    P = np.empty((len(assets), 3))
    for k, a in enumerate(assets):
        r = math.hypot(a.half_width, a.half_depth)
        if r > room.width - r or r > room.depth - r:
            raise InfeasibleSceneError(
                f"asset {a.id} (radius {r:.3f} m) cannot fit in a {room.width} x {room.depth} m room")
        P[k, 0] = rng.uniform(r, room.width - r)
        P[k, 1] = rng.uniform(r, room.depth - r)
        P[k, 2] = rng.integers(4) * 0.5 * math.pi + rng.uniform(-yaw_noise, yaw_noise)
    return P


# ---------------------------------------------------------------------------
# per-group descent
# ---------------------------------------------------------------------------

def step_scale(config: OptimizerConfig, it: int, iterations: int) -> float:
    """Multiplier on the base step sizes at step ``it`` of ``iterations``."""
    if config.lr_schedule == "constant":
        return 1.0
    start = 0 if config.lr_schedule == "cosine" else iterations * (1.0 - config.anneal_fraction)
    if it <= start:
        return 1.0
    return 0.5 * (1.0 + math.cos(math.pi * (it - start) / (iterations - start)))


@dataclass
class GroupResult:
    poses: np.ndarray
    initial_total: float
    final_total: float
    best_iteration: int


def _nonfinite_term(program, P, w) -> str:
    ev = eval_program(program, P, w)
    for k, v in enumerate(ev.values):
        if not math.isfinite(v):
            t = program.terms[k]
            return f"{t.kind.value} term #{k} ({t.relation_id or 'physical'})"
    for k, t in enumerate(program.terms):
        sub = program.subset([k], frozen=program.frozen)
        g = eval_program(sub, P, [w[k]]).gradient
        if not np.all(np.isfinite(g)):
            return f"{t.kind.value} term #{k} ({t.relation_id or 'physical'})"
    return "unknown term"


def optimize_group(program: ConstraintProgram, poses: np.ndarray, active: Sequence[int],
                   config: OptimizerConfig = OptimizerConfig(),
                   compile_config: Optional[CompileConfig] = None,
                   iterations: Optional[int] = None) -> GroupResult:
    """First-order adaptive-moment descent over the ``active`` poses.

    Poses in ``program.frozen`` (and any row outside ``active``) are never
    changed. Collision weights are refreshed every step. The best iterate seen,
    the start included, is returned.
    """
    iterations = config.iterations if iterations is None else iterations
    P = np.array(poses, dtype=float).reshape(-1, 3)
    active = np.array(sorted(set(int(a) for a in active) - set(program.frozen)), dtype=np.int64)
    lr = np.array([config.lr_position, config.lr_position, config.lr_yaw])
    m = np.zeros((active.size, 3))
    v = np.zeros((active.size, 3))
    best = P.copy()
    best_total = math.inf
    best_it = 0
    initial_total = None
    b1, b2 = config.beta1, config.beta2
    for it in range(iterations + 1):
        w = adaptive_weights(program, P, compile_config)
        ev = eval_program(program, P, w)
        if initial_total is None:
            initial_total = ev.total
        if not (math.isfinite(ev.total) and np.all(np.isfinite(ev.gradient))):
            raise OptimizationError(f"non-finite gradient from {_nonfinite_term(program, P, w)}")
        if ev.total < best_total:
            best_total = ev.total
            best = P.copy()
            best_it = it
        if it == iterations or active.size == 0:
            break
        g = ev.gradient.reshape(-1, 3)[active]
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        mhat = m / (1.0 - b1 ** (it + 1))
        vhat = v / (1.0 - b2 ** (it + 1))
        scale = step_scale(config, it, iterations)
        P[active] -= scale * lr * mhat / (np.sqrt(vhat) + config.eps)
    return GroupResult(best, initial_total, best_total, best_it)


# ---------------------------------------------------------------------------
# whole scene
# ---------------------------------------------------------------------------

def _terms_for(program: ConstraintProgram, active: set, placed: set) -> list:
    allowed = active | placed
    return [k for k, t in enumerate(program.terms)
            if set(t.indices) <= allowed and set(t.indices) & active]


def optimize_scene(assets: Sequence[ObjectAsset], groups: Sequence[SemanticGroup],
                   inter_relations: Sequence, profile: Optional[AnthropometricProfile], room: Room,
                   config: OptimizerConfig = OptimizerConfig(), mode: str = "HO",
                   compile_config: Optional[CompileConfig] = None,
                   program: Optional[ConstraintProgram] = None) -> SceneLayout:
    """Place groups one at a time in priority order, freezing each once done."""
    compile_config = compile_config or CompileConfig()
    if program is None:
        program = compile_program(groups, inter_relations, assets, profile, room, mode, compile_config)
    index = {a.id: k for k, a in enumerate(program.assets)}
    P = initialize(program.assets, room, config.seed, config.yaw_noise)
    ordered = group_order(groups)
    per_group = config.iterations
    if config.iterations_scope == "scene":
        per_group = max(1, math.ceil(config.iterations / max(1, len(ordered))))
    placed = set()
    group_diag = []
    for g in ordered:
        active = {index[m] for m in g.members}
        sub = program.subset(_terms_for(program, active, placed), frozen=placed)
        try:
            res = optimize_group(sub, P, sorted(active), config, compile_config, per_group)
        except LayoutError as exc:
            raise OptimizationError(f"group {g.group_id}: {exc}", group_id=g.group_id) from exc
        P = res.poses
        placed |= active
        group_diag.append({"group_id": g.group_id, "members": list(g.members), "terms": len(sub.terms),
                           "initial_total": res.initial_total, "final_total": res.final_total,
                           "best_iteration": res.best_iteration})
    w = adaptive_weights(program, P, compile_config)
    final = program.with_weights(w)
    ev = eval_program(final, P)
    z = program.z_bases()
    poses = tuple(Pose(float(P[k, 0]), float(P[k, 1]), float(P[k, 2]), float(z[k]))
                  for k in range(len(program.assets)))
    # store normalized yaws so the layout and the program dump agree exactly
    final_P = np.array([[p.x, p.y, p.yaw] for p in poses]).reshape(-1, 3)
    ev = eval_program(final, final_P)
    return SceneLayout(program.assets, poses, room, config.seed, config_hash(config, compile_config),
                       ev.total, tuple(float(v) for v in ev.values),
                       {"groups": group_diag, "iterations_per_group": per_group}, final)


def _run_candidate(args):
    assets, groups, inter, profile, room, config, mode, cc, program = args
    try:
        return optimize_scene(assets, groups, inter, profile, room, config, mode, cc, program), None
    except InfeasibleSceneError as exc:
        return None, exc.to_dict() | {"seed": config.seed}


def candidate_key(score: float, total: float, seed: int) -> tuple:
    """Sort key: highest collision-free score, then lowest penalty, then lowest seed."""
    return (-score, total, seed)


def select_candidate(assets, groups, inter_relations, profile, room,
                     config: OptimizerConfig = OptimizerConfig(), mode: str = "HO",
                     compile_config: Optional[CompileConfig] = None, jobs: int = 1) -> SceneLayout:
    """Optimize ``candidate_count`` seeds and keep the most collision-free layout."""
    from .metrics import collision_free_score

    compile_config = compile_config or CompileConfig()
    program = compile_program(groups, inter_relations, assets, profile, room, mode, compile_config)
    jobs_args = []
    for k in range(config.candidate_count):
        cfg = OptimizerConfig(**{**config.to_dict(), "seed": config.seed + k})
        jobs_args.append((tuple(assets), tuple(groups), tuple(inter_relations), profile, room, cfg,
                          mode, compile_config, program))
    if jobs > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(jobs_args))) as pool:
            results = list(pool.map(_run_candidate, jobs_args))
    else:
        results = [_run_candidate(a) for a in jobs_args]
    scored = []
    failures = []
    for layout, err in results:
        if layout is None:
            failures.append(err)
            continue
        score = collision_free_score(layout)
        layout.diagnostics["collision_free_score"] = score
        scored.append((candidate_key(score, layout.total_penalty, layout.seed), layout))
    if not scored:
        raise OptimizationError("all candidates infeasible", diagnostics=failures)
    scored.sort(key=lambda s: s[0])
    best = scored[0][1]
    best.diagnostics["candidates"] = [{"seed": l.seed, "collision_free_score": -k[0], "total_penalty": k[1]}
                                      for k, l in sorted(scored, key=lambda s: s[1].seed)]
    return best
