"""Time the numba kernels against the numpy fallback.

The backend is fixed at import, so each one runs in its own interpreter:

    python benchmarks/bench_kernels.py            # both, side by side
    python benchmarks/bench_kernels.py --repeat 10
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up, also pays numba compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def worker(repeat):
    from anthrolayout import _accel
    from anthrolayout.anthropometry import load_profile, manipulation_box
    from anthrolayout.constraints import compile_program, eval_program
    from anthrolayout.files import bundled_profile_path, bundled_scene_path, load_scene
    from anthrolayout.geometry import Pose
    from anthrolayout.metrics import BodyBox, TrajectoryEpisode, speed_sums, volumetric_occupancy_ratio
    from anthrolayout.optimizer import OptimizerConfig, optimize_scene
    from anthrolayout.relations import MovablePart, ObjectAsset

    profile = load_profile(bundled_profile_path())
    scene = load_scene(bundled_scene_path("office"))
    prog = compile_program(scene.groups, scene.inter_relations, scene.assets, profile, scene.room, "HO")
    P = np.random.default_rng(0).uniform(0.5, 5.0, (prog.n_assets, 3))

    rng = np.random.default_rng(1)
    fps = 30.0
    walk = np.cumsum(rng.normal(0, 0.02, (3000, 2)), axis=0) + [2.5, 2.5]
    t = np.arange(len(walk)) / fps
    ep = TrajectoryEpisode("p", fps, t, walk, BodyBox.from_profile(profile))
    chest = ObjectAsset("chest", "chest", 0.9, 0.5, 0.8, (MovablePart("drawer"),))
    box = manipulation_box(chest, Pose(2.5, 2.5, 0.3), profile)

    cases = {
        "eval_program (office, 1 call)": lambda: eval_program(prog, P),
        "optimize_scene (office, 100 it/group)": lambda: optimize_scene(
            scene.assets, scene.groups, scene.inter_relations, profile, scene.room, OptimizerConfig(iterations=100)),
        "volumetric_occupancy (3000 frames)": lambda: volumetric_occupancy_ratio(ep, box),
        "speed_sums (3000 frames, 1024^2)": lambda: speed_sums([ep], scene.room),
    }
    out = {name: _best(fn, repeat) for name, fn in cases.items()}
    print(json.dumps({"backend": _accel.backend_name(), "timings": out}))


def run_backend(flag, repeat):
    env = dict(os.environ, ANTHROLAYOUT_NUMBA=flag)
    res = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return
    nb, np_ = run_backend("1", args.repeat), run_backend("0", args.repeat)
    width = max(map(len, nb["timings"]))
    print(f"{'case':<{width}}  {nb['backend']:>10}  {np_['backend']:>10}  speedup")
    for name, a in nb["timings"].items():
        b = np_["timings"][name]
        print(f"{name:<{width}}  {a * 1e3:>8.2f}ms  {b * 1e3:>8.2f}ms  {b / a:>6.1f}x")


if __name__ == "__main__":
    main()
