"""Command-line driver: ``generate``, ``evaluate``, ``explain``, ``sample-profile``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .anthropometry import PercentileTable, load_profile, manipulation_box, sample_profile
from .constraints import CompileConfig, adaptive_weights, compile_program, dump_program, eval_program, load_program
from .errors import ConfigurationError, LayoutError, SchemaError
from .files import (MANIFEST_FORMAT, atomic_write, bundled_profile_path, bundled_scene_path, canonical_json,
                    layout_from_dict, layout_to_dict, load_scene, make_manifest, manifest_hash, sha256_file)
from .metrics import (BodyBox, collision_free_score, colliding_pairs, count_distinct_trajectories,
                      in_boundary_score, load_trajectory, mean_speed_heatmap, volumetric_occupancy_ratio)
from .optimizer import OptimizerConfig, select_candidate
from .relations import RemoteBackend, RuleBackend, detect_conflicts, infer_relations

log = logging.getLogger("anthrolayout")

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_RUN = 4


class CliError(Exception):
    def __init__(self, message, code=EXIT_USAGE, kind="usage_error"):
        super().__init__(message)
        self.exit_code = code
        self.kind = kind


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT, "io_error") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None


def _resolve_scene(arg: str) -> Path:
    p = Path(arg)
    if p.exists():
        return p
    try:
        return bundled_scene_path(arg)
    except SchemaError:
        raise CliError(f"scene {arg!r} is neither a file nor a bundled scene", EXIT_INPUT, "io_error") from None


def _resolve_profile(arg: str) -> Path:
    p = Path(arg)
    if not p.exists() and arg == "example":
        return bundled_profile_path()
    return p


def load_run_config(path) -> tuple:
    """``(optimizer overrides, constraint overrides)`` from a JSON config file."""
    if path is None:
        return {}, {}
    d = _read_json(path)
    unknown = set(d) - {"optimizer", "constraints"}
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    return dict(d.get("optimizer", {})), dict(d.get("constraints", {}))


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def _apply_replay(args) -> dict:
    """Fill ``args`` from a recorded manifest; returns that manifest."""
    if args.scene or args.config or any(v is not None for v in (args.seed, args.candidates, args.iterations)):
        raise CliError("--replay takes its scene, seed and config from the manifest; drop the other options")
    doc = _read_json(args.replay)
    manifest = doc.get("manifest", doc)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise SchemaError(f"{args.replay}: no run manifest found")
    args.scene = manifest["scene"]
    args.mode = manifest["mode"]
    src = manifest.get("profile_source") or {}
    args.profile = src.get("path") if src.get("kind") == "file" else None
    args.percentiles = src.get("percentiles") if src.get("kind") == "sampled" else None
    args.profile_seed = src.get("seed", 0)
    backend = manifest["config_overrides"].get("backend")
    args.backend = backend if backend in ("rule", "remote") else "rule"
    kernels = manifest["config_overrides"].get("kernels")
    if kernels != _accel.backend_name():
        # numba and numpy kernels agree only to rounding, so outputs may differ in the last bits
        log.warning("manifest used %s kernels, running %s", kernels, _accel.backend_name())
    if manifest.get("tool_version") != __version__:
        log.warning("manifest was written by version %s, running %s", manifest.get("tool_version"), __version__)
    return manifest


def cmd_generate(args) -> int:
    recorded = _apply_replay(args) if args.replay else None
    if args.scene is None:
        raise CliError("a scene is required (or --replay)")
    scene_path = _resolve_scene(args.scene)
    scene = load_scene(scene_path)
    if recorded is not None:
        opt_over = dict(recorded["config_overrides"]["optimizer"])
        cc_over = dict(recorded["config_overrides"]["constraints"])
    else:
        opt_over, cc_over = load_run_config(args.config)
    for key, val in (("seed", args.seed), ("candidate_count", args.candidates), ("iterations", args.iterations)):
        if val is not None:
            opt_over[key] = val
    opt_cfg = OptimizerConfig.from_dict(opt_over)
    cc = CompileConfig.from_dict(cc_over)

    inputs = {"scene": scene_path}
    if args.config:
        inputs["config"] = args.config
    profile = None
    profile_source = None
    if args.mode == "baseline":
        if args.profile or args.percentiles:
            log.warning("baseline mode ignores the profile")
    else:
        if args.profile:
            ppath = _resolve_profile(args.profile)
            profile = load_profile(ppath)
            profile_source = {"kind": "file", "path": args.profile}
            inputs["profile"] = ppath
        elif args.percentiles:
            table = PercentileTable.load(None if args.percentiles == "example" else args.percentiles)
            profile = sample_profile(table, args.profile_seed)
            profile_source = {"kind": "sampled", "percentiles": args.percentiles, "seed": args.profile_seed}
            if args.percentiles != "example":
                inputs["percentiles"] = args.percentiles
        else:
            raise CliError(f"profile required for mode {args.mode} (use --profile or --percentiles)")

    if scene.has_relations:
        groups, inter = list(scene.groups), list(scene.inter_relations)
        relation_source = "scene"
    else:
        backend = RemoteBackend(criteria=scene.criteria) if args.backend == "remote" else RuleBackend()
        groups, inter = infer_relations(scene.assets, scene.room, backend)
        relation_source = args.backend
    conflicts = detect_conflicts([r for g in groups for r in g.intra_relations] + list(inter))
    for c in conflicts:
        log.warning("relation conflict: %s", c)

    layout = select_candidate(scene.assets, groups, inter, profile, scene.room, opt_cfg, args.mode, cc,
                              jobs=args.jobs)
    layout.diagnostics["relation_source"] = relation_source
    layout.diagnostics["conflicts"] = [str(c) for c in conflicts]
    layout.diagnostics["in_boundary_score"] = in_boundary_score(layout)

    if recorded is not None:
        for key, path in inputs.items():
            want = recorded["content_hashes"].get(key)
            if want is not None and sha256_file(path) != want:
                raise CliError(f"{key} file {path} changed since the recorded run", EXIT_INPUT, "input_changed")
        manifest = recorded
    else:
        manifest = make_manifest(scene_path=args.scene, mode=args.mode, profile_source=profile_source,
                                 seed=opt_cfg.seed,
                                 overrides={"optimizer": opt_cfg.to_dict(), "constraints": cc.to_dict(),
                                            "backend": relation_source, "kernels": _accel.backend_name()},
                                 version=__version__, inputs=inputs)
    out = Path(args.out_dir)
    program_doc = dump_program(layout.program, layout.pose_matrix())
    program_doc["manifest"] = manifest
    program_doc["manifest_hash"] = manifest_hash(manifest)
    atomic_write(out / "layout.json", canonical_json(layout_to_dict(layout, manifest)))
    atomic_write(out / "program.json", canonical_json(program_doc))
    print(json.dumps({"layout": str(out / "layout.json"), "program": str(out / "program.json"),
                      "seed": layout.seed, "collision_free_score": layout.diagnostics["collision_free_score"],
                      "in_boundary_score": layout.diagnostics["in_boundary_score"],
                      "total_penalty": layout.total_penalty}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def evaluate_report(layout, episodes=(), profile=None, targets=(), voxel=0.05, heatmap_prefix=None) -> dict:
    report = {"collision_free_score": collision_free_score(layout),
              "in_boundary_score": in_boundary_score(layout),
              "colliding_pairs": [list(p) for p in colliding_pairs(layout)]}
    if not episodes:
        return report
    body = BodyBox.from_profile(profile) if profile is not None else None
    episodes = [ep.with_body(body) if body and ep.body is None else ep for ep in episodes]
    behavior = {"episodes": len(episodes)}
    if body is None:
        behavior["occupancy"] = {"skipped": "profile required for body and manipulation boxes"}
    else:
        ids = list(targets) or [a.id for a in layout.assets if a.operational_class is not None]
        occ = {}
        for aid in ids:
            asset = next((a for a in layout.assets if a.id == aid), None)
            if asset is None:
                raise SchemaError(f"unknown target asset {aid!r}")
            box = manipulation_box(asset, layout.pose_of(aid), profile)
            occ[aid] = {"box": box.to_dict(),
                        "per_episode": [volumetric_occupancy_ratio(ep, box, voxel) for ep in episodes]}
        behavior["occupancy"] = occ
    behavior["distinct_trajectories"] = count_distinct_trajectories(
        episodes, layout, body.breadth if body else 0.0)
    grid = mean_speed_heatmap(episodes, layout.room)
    visited = grid.mean[grid.visited]
    behavior["heatmap"] = {"visited_cells": int(grid.visited.sum()),
                           "mean_speed": float(visited.mean()) if visited.size else None,
                           "max_speed": float(visited.max()) if visited.size else None,
                           "cell_size": list(grid.cell_size), "sigma": grid.sigma}
    if heatmap_prefix:
        grid.save_image(f"{heatmap_prefix}.pgm")
        grid.save_raw(f"{heatmap_prefix}.grid")
        behavior["heatmap"]["files"] = [f"{heatmap_prefix}.pgm", f"{heatmap_prefix}.grid"]
    report["behavior"] = behavior
    return report


def cmd_evaluate(args) -> int:
    layout = layout_from_dict(_read_json(args.layout))
    profile = load_profile(_resolve_profile(args.profile)) if args.profile else None
    episodes = [load_trajectory(p) for p in args.trajectories]
    report = evaluate_report(layout, episodes, profile, args.target, args.voxel, args.heatmap)
    text = canonical_json(report)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# explain
# ---------------------------------------------------------------------------

def _program_from_layout_doc(doc):
    manifest = doc.get("manifest")
    if not manifest:
        raise SchemaError("layout has no manifest; pass the program dump instead")
    scene = load_scene(_resolve_scene(manifest["scene"]))
    src = manifest.get("profile_source")
    profile = None
    if src and src["kind"] == "file":
        profile = load_profile(_resolve_profile(src["path"]))
    elif src and src["kind"] == "sampled":
        pct = src["percentiles"]
        profile = sample_profile(PercentileTable.load(None if pct == "example" else pct), src["seed"])
    cc = CompileConfig.from_dict(manifest["config_overrides"]["constraints"])
    if scene.has_relations:
        groups, inter = scene.groups, scene.inter_relations
    else:
        groups, inter = infer_relations(scene.assets, scene.room, RuleBackend())
    program = compile_program(groups, inter, scene.assets, profile, scene.room, manifest["mode"], cc)
    layout = layout_from_dict(doc)
    P = np.array([[p.x, p.y, p.yaw] for p in (layout.pose_of(a.id) for a in program.assets)])
    return program.with_weights(adaptive_weights(program, P, cc)), P


def explain_rows(program, poses) -> tuple:
    ev = eval_program(program, poses)
    rows = []
    for n, (t, v) in enumerate(zip(program.terms, ev.values)):
        ids = [program.assets[i].id for i in t.indices]
        band = ""
        if "d_min" in t.params:
            band = f"[{t.params['d_min']:.3f}, {t.params['d_max']:.3f}]"
        elif t.params:
            band = ", ".join(f"{k}={v:.4g}" for k, v in sorted(t.params.items()))
        rows.append({"index": n, "kind": t.kind.value, "participants": ids, "band": band,
                     "weight": t.weight, "violation": float(v), "weighted": float(t.weight * v),
                     "rationale": t.rationale, "relation_id": t.relation_id})
    return rows, ev.total


def cmd_explain(args) -> int:
    doc = _read_json(args.dump)
    fmt = doc.get("format")
    if fmt == "anthrolayout.layout":
        program, P = _program_from_layout_doc(doc)
    else:
        program, P = load_program(doc)
        if P is None:
            raise SchemaError("program dump has no poses to explain")
    rows, total = explain_rows(program, P)
    if args.json:
        sys.stdout.write(canonical_json({"rows": rows, "total": total}))
        return 0
    header = f"{'#':>3}  {'kind':<13} {'participants':<34} {'band / params':<22} {'residual':>11}  rationale"
    print(header)
    print("-" * len(header))
    for r in rows:
        who = " -> ".join(r["participants"])
        print(f"{r['index']:>3}  {r['kind']:<13} {who:<34} {r['band']:<22} {r['violation']:>11.6g}  {r['rationale']}")
    print("-" * len(header))
    print(f"terms: {len(rows)}  total weighted penalty: {total!r}")
    return 0


# ---------------------------------------------------------------------------
# sample-profile
# ---------------------------------------------------------------------------

def cmd_sample_profile(args) -> int:
    table = PercentileTable.load(None if args.percentiles == "example" else args.percentiles)
    profile = sample_profile(table, args.seed, args.max_retries)
    doc = profile.to_dict()
    doc["source"] = {"percentiles": args.percentiles, "seed": args.seed, "tool_version": __version__}
    text = canonical_json(doc)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anthrolayout", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="optimize a scene and write layout.json + program.json")
    g.add_argument("scene", nargs="?",
                   help="scene file, or the name of a bundled scene (office, studio, desk_corner)")
    g.add_argument("--replay", help="re-run the manifest embedded in a layout, program dump or manifest file")
    g.add_argument("--mode", choices=("baseline", "PO", "HO"), default="HO")
    g.add_argument("--profile", help="profile JSON ('example' for the bundled one)")
    g.add_argument("--percentiles", help="percentile table to sample a profile from ('example' for bundled)")
    g.add_argument("--profile-seed", type=int, default=0)
    g.add_argument("--seed", type=int)
    g.add_argument("--candidates", type=int)
    g.add_argument("--iterations", type=int)
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--config", help="JSON with 'optimizer' and 'constraints' sections")
    g.add_argument("--backend", choices=("rule", "remote"), default="rule",
                   help="relation inference for scenes without a relations block")
    g.add_argument("-o", "--out-dir", default=".")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="score a layout, optionally against trajectories")
    e.add_argument("layout")
    e.add_argument("--trajectories", nargs="*", default=[])
    e.add_argument("--profile")
    e.add_argument("--target", action="append", default=[], help="asset id for occupancy (repeatable)")
    e.add_argument("--voxel", type=float, default=0.05)
    e.add_argument("--heatmap", help="write PREFIX.pgm and PREFIX.grid")
    e.add_argument("--config", help="accepted for symmetry; unused")
    e.add_argument("-o", "--out")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("explain", help="tabulate every penalty term of a program dump or layout")
    x.add_argument("dump")
    x.add_argument("--json", action="store_true")
    x.set_defaults(func=cmd_explain)

    s = sub.add_parser("sample-profile", help="draw a profile from a percentile table")
    s.add_argument("--percentiles", default="example")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-retries", type=int, default=100)
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_sample_profile)
    return p


def _fail(kind, message, code, extra=None) -> int:
    block = {"error": {"type": kind, "message": message, **(extra or {})}}
    sys.stderr.write(json.dumps(block, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.kind, str(exc), exc.exit_code)
    except (SchemaError, ConfigurationError) as exc:
        d = exc.to_dict()
        return _fail(d.pop("type"), d.pop("message"), EXIT_INPUT if isinstance(exc, SchemaError) else EXIT_USAGE, d)
    except LayoutError as exc:
        d = exc.to_dict()
        return _fail(d.pop("type"), d.pop("message"), EXIT_RUN, d)


if __name__ == "__main__":
    sys.exit(main())
