"""Benchmark the numba kernels against the pure-numpy fallback.

Runs each hot kernel on benchmark-sized inputs, reports wall time per
call for both backends plus the largest output disagreement, then times
an end-to-end refinement under each backend.

Usage:
    python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from rigcal import kernels
from rigcal.geometry import CameraIntrinsics
from rigcal.metrics import report_errors
from rigcal.optimizer import OptimizerConfig, refine
from rigcal.residuals import ObjectiveConfig, draw_samples
from rigcal.simulator import (
    NoiseModel,
    RigLayout,
    Scene,
    default_layout,
    default_scene,
    generate_dataset,
)


def timeit(fn, repeats, warmup=2):
    for _ in range(warmup):
        fn()
    start = time.perf_counter()
    for _ in range(repeats):
        out = fn()
    return (time.perf_counter() - start) / repeats, out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.abs(a - b).max()) if a.size else 0.0


def intrinsics_vec(intr):
    return np.array([intr.fx, intr.fy, intr.cx, intr.cy, float(intr.width), float(intr.height)])


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    numpy_k = kernels.resolve("numpy")
    try:
        numba_k = kernels.resolve("numba")
    except ImportError:
        print("numba is not installed; nothing to compare")
        return

    scene = default_scene()
    layout = default_layout()
    rig = generate_dataset(layout, scene, NoiseModel(rot_perturb_deg=2.0,
                                                     trans_perturb_m=0.05, seed=1))
    extr = rig.init_extrinsics()
    cfg = ObjectiveConfig(seed=1)
    geo_samples, cycle_samples = draw_samples(rig, extr, cfg)

    hi_intr = CameraIntrinsics(fx=1280.0, fy=1280.0, cx=511.5, cy=383.5, width=1024, height=768)
    cam = rig.cameras[0]
    from rigcal.geometry import inverse

    cam_to_world = inverse(cam.gt_extrinsic)

    cases = []

    def render(k, intr):
        return lambda: k.render_depth(
            scene.room_min, scene.room_max, scene.spheres, scene.boxes,
            intrinsics_vec(intr), cam_to_world.translation, cam_to_world.rotation,
        )

    cases.append(("render_depth 320x240", render(numpy_k, layout.intrinsics),
                  render(numba_k, layout.intrinsics)))
    cases.append(("render_depth 1024x768", render(numpy_k, hi_intr), render(numba_k, hi_intr)))

    pair, uv = geo_samples[0]
    from rigcal.geometry import compose

    rel = compose(extr[pair[1]], inverse(extr[pair[0]]))

    def geo(k, want_jac):
        return lambda: k.geo_blocks(
            uv, rig.cameras[pair[0]].depth, rig.cameras[pair[1]].depth,
            intrinsics_vec(rig.cameras[pair[0]].intrinsics),
            intrinsics_vec(rig.cameras[pair[1]].intrinsics),
            rel.rotation, rel.translation, want_jac,
        )

    cases.append(("geo_blocks M=256", geo(numpy_k, False), geo(numba_k, False)))
    cases.append(("geo_blocks M=256 +jac", geo(numpy_k, True), geo(numba_k, True)))

    triplet, points, _ = cycle_samples[0]
    i, j, kk = triplet
    rel_kj = compose(extr[kk], inverse(extr[j]))
    rel_ik = compose(extr[i], inverse(extr[kk]))

    def cyc(k, want_jac):
        return lambda: k.cycle_blocks(
            points, rig.cameras[j].depth, rig.cameras[kk].depth,
            intrinsics_vec(rig.cameras[i].intrinsics),
            intrinsics_vec(rig.cameras[j].intrinsics),
            intrinsics_vec(rig.cameras[kk].intrinsics),
            extr[i].rotation, extr[i].translation,
            extr[j].rotation, extr[j].translation,
            rel_kj.rotation, rel_kj.translation,
            rel_ik.rotation, rel_ik.translation,
            1.0 / rig.cameras[i].intrinsics.fx, want_jac,
        )

    cases.append(("cycle_blocks S=128", cyc(numpy_k, False), cyc(numba_k, False)))
    cases.append(("cycle_blocks S=128 +jac", cyc(numpy_k, True), cyc(numba_k, True)))

    print(f"{'kernel':26s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, np_fn, nb_fn in cases:
        t_np, out_np = timeit(np_fn, args.repeats)
        t_nb, out_nb = timeit(nb_fn, args.repeats)
        diff = max_diff(out_np, out_nb)
        print(f"{name:26s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} "
              f"{t_np / t_nb:7.1f}x {diff:10.2e}")

    print()
    results = {}
    for name in ("numpy", "numba"):
        kernels.set_backend(name)
        try:
            start = time.perf_counter()
            result = refine(rig, cfg, OptimizerConfig())
            elapsed = time.perf_counter() - start
        finally:
            kernels.set_backend(None)
        report = report_errors(result.extrinsics, rig.gt_extrinsics(), name, 1)
        results[name] = (elapsed, report.mean_rot_deg)
        print(f"refine end-to-end [{name:5s}]: {elapsed:6.2f}s  "
              f"(mean rotation error {report.mean_rot_deg:.5f} deg)")
    print(f"refine speedup: {results['numpy'][0] / results['numba'][0]:.1f}x")


if __name__ == "__main__":
    main()
