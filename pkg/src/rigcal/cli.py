"""Command-line entry point: simulate | refine | evaluate | ablate.

Every command is a pure function of its flags, config file, dataset
bytes, and seed; re-running produces byte-identical outputs. Exit codes:
0 success, 2 usage/config/data error, 3 optimization degeneracy.

Configuration comes from an optional JSON file (--config) with sections
"layout", "scene", "noise", "objective", "optimizer"; explicit flags win
over the file. Defaults are the built-in benchmark rig (see
``rigcal simulate --help`` and the README).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import dataset as dataset_io
from . import metrics, simulator
from .dataset import EstimateFile, load_rig, save_estimate, save_rig, load_estimate
from .errors import (
    ConfigError,
    CountMismatch,
    DataError,
    DegenerateProblem,
    RigcalError,
    SingularNormalEquations,
)
from .geometry import CameraIntrinsics
from .optimizer import OptimizerConfig, refine
from .residuals import ObjectiveConfig
from .simulator import NoiseModel, RigLayout, Scene

ABLATION_VARIANTS = ("original", "no_rc", "no_mc", "full")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    doc = dataset_io._load_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _section(config: dict, name: str) -> dict:
    sec = config.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    return sec


def _build_scene(config: dict) -> Scene:
    sec = _section(config, "scene")
    if not sec:
        return simulator.default_scene()
    try:
        return Scene(
            room_min=np.asarray(sec.get("room_min", [-3.0, -3.0, 0.0]), dtype=float),
            room_max=np.asarray(sec.get("room_max", [3.0, 3.0, 3.0]), dtype=float),
            spheres=np.asarray(sec.get("spheres", []), dtype=float).reshape(-1, 4),
            boxes=np.asarray(sec.get("boxes", []), dtype=float).reshape(-1, 6),
        )
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from exc


def _build_layout(config: dict, args) -> RigLayout:
    sec = _section(config, "layout")
    n = args.cameras if args.cameras is not None else int(sec.get("n_cameras", 4))
    base = simulator.DEFAULT_INTRINSICS
    try:
        intr = CameraIntrinsics(
            fx=float(sec.get("fx", base.fx)),
            fy=float(sec.get("fy", base.fy)),
            cx=float(sec.get("cx", base.cx)),
            cy=float(sec.get("cy", base.cy)),
            width=int(sec.get("width", base.width)),
            height=int(sec.get("height", base.height)),
        )
        return RigLayout(
            n_cameras=n,
            radius=float(sec.get("radius", 1.6)),
            height=float(sec.get("camera_height", 2.4)),
            intrinsics=intr,
            angles_deg=sec.get("angles_deg"),
        )
    except (ValueError, RigcalError) as exc:
        raise ConfigError(f"layout: {exc}") from exc


def _build_noise(config: dict, args, seed: int) -> NoiseModel:
    sec = _section(config, "noise")

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return sec.get(key, default)

    return NoiseModel(
        depth_sigma_rel=float(pick(args.depth_noise, "depth_sigma_rel", 0.0)),
        rot_perturb_deg=float(pick(args.rot_noise, "rot_perturb_deg", 0.0)),
        trans_perturb_m=float(pick(args.trans_noise, "trans_perturb_m", 0.0)),
        dropout_rate=float(pick(args.dropout, "dropout_rate", 0.0)),
        seed=seed,
    )


def _build_objective(config: dict, args, seed: int) -> ObjectiveConfig:
    sec = _section(config, "objective")
    lam = args.lam if args.lam is not None else float(sec.get("lam", 1.0))
    return ObjectiveConfig(
        lam=lam,
        enable_rc=not args.no_rc and bool(sec.get("enable_rc", True)),
        enable_mc=not args.no_mc and bool(sec.get("enable_mc", True)),
        geo_points_per_pair=int(sec.get("geo_points_per_pair", 256)),
        cycle_points=int(sec.get("cycle_points", 128)),
        pairs=None if sec.get("pairs") is None else tuple(tuple(p) for p in sec["pairs"]),
        triplets=None if sec.get("triplets") is None else tuple(tuple(t) for t in sec["triplets"]),
        normalize_pixel_residuals=bool(sec.get("normalize_pixel_residuals", True)),
        huber_delta=sec.get("huber_delta"),
        seed=seed,
    )


def _build_optimizer(config: dict, args) -> OptimizerConfig:
    sec = _section(config, "optimizer")
    return OptimizerConfig(
        max_outer_iters=args.max_outer if args.max_outer is not None
        else int(sec.get("max_outer_iters", 10)),
        max_inner_iters=args.max_inner if args.max_inner is not None
        else int(sec.get("max_inner_iters", 20)),
        lm_lambda0=float(sec.get("lm_lambda0", 1e-4)),
        lm_up=float(sec.get("lm_up", 10.0)),
        lm_down=float(sec.get("lm_down", 0.1)),
        rel_tol=float(sec.get("rel_tol", 1e-8)),
        abs_tol=float(sec.get("abs_tol", 1e-12)),
        gauge_camera=int(sec.get("gauge_camera", 0)),
    )


def cmd_simulate(args) -> int:
    config = _load_config_file(args.config)
    scene = _build_scene(config)
    layout = _build_layout(config, args)
    noise = _build_noise(config, args, args.seed)
    rig = simulator.generate_dataset(layout, scene, noise)
    save_rig(rig, args.out)
    intr = layout.intrinsics
    print(f"dataset: {args.out}")
    print(f"cameras: {rig.n_cameras}  resolution: {intr.width}x{intr.height}")
    print(
        "noise: depth_sigma_rel={} rot_perturb_deg={} trans_perturb_m={} dropout_rate={} seed={}".format(
            noise.depth_sigma_rel, noise.rot_perturb_deg, noise.trans_perturb_m,
            noise.dropout_rate, noise.seed,
        )
    )
    return 0


def cmd_refine(args) -> int:
    config = _load_config_file(args.config)
    rig = load_rig(args.dataset)
    obj_cfg = _build_objective(config, args, args.seed)
    opt_cfg = _build_optimizer(config, args)
    result = refine(rig, obj_cfg, opt_cfg)
    est = EstimateFile(
        extrinsics=result.extrinsics,
        initial_loss=result.initial_loss,
        final_loss=result.final_loss,
        iterations={"outer": result.outer_iters, "inner": result.inner_iters},
        termination=result.termination,
        config={"objective": obj_cfg.as_dict(), "optimizer": opt_cfg.as_dict()},
    )
    save_estimate(est, args.estimate)
    print(f"initial: L_geo={result.initial_loss['geo']:.12g} L_cycle={result.initial_loss['cycle']:.12g}")
    print(f"final:   L_geo={result.final_loss['geo']:.12g} L_cycle={result.final_loss['cycle']:.12g}")
    print(f"iterations: outer={result.outer_iters} inner={result.inner_iters} ({result.termination})")
    print(f"estimate: {args.estimate}")
    return 0


def cmd_evaluate(args) -> int:
    rig = load_rig(args.dataset)
    gt = rig.gt_extrinsics()
    if gt is None:
        raise DataError(
            "dataset has no ground-truth extrinsics; only loss values are evaluable"
        )
    est = load_estimate(args.estimate)
    if len(est.extrinsics) != rig.n_cameras:
        raise CountMismatch(
            f"estimate has {len(est.extrinsics)} cameras, dataset has {rig.n_cameras}"
        )
    report = metrics.report_errors(est.extrinsics, gt, variant="estimate", seed=args.seed)
    csv_text = metrics.format_report_csv([report])
    with open(args.report, "w", encoding="utf-8", newline="\n") as f:
        f.write(csv_text)
    print(f"mean rotation error:    {report.mean_rot_deg:.6f} deg")
    print(f"mean translation error: {report.mean_trans_mm:.6f} mm")
    print(f"report: {args.report}")
    return 0


def cmd_ablate(args) -> int:
    config = _load_config_file(args.config)
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    rig = load_rig(args.dataset)
    gt = rig.gt_extrinsics()
    if gt is None:
        raise DataError("ablation needs a dataset with ground-truth extrinsics")
    opt_cfg = _build_optimizer(config, args)
    reports = []
    for trial in range(args.trials):
        trial_seed = args.seed + trial
        noise = _build_noise(config, args, trial_seed)
        trial_rig = simulator.perturb_rig(rig, noise)
        base = _build_objective(config, args, trial_seed)
        for variant in ABLATION_VARIANTS:
            if variant == "original":
                est = trial_rig.init_extrinsics()
                loss = None
            else:
                obj_cfg = dataclasses.replace(
                    base,
                    enable_rc=variant != "no_rc",
                    enable_mc=variant != "no_mc",
                )
                result = refine(trial_rig, obj_cfg, opt_cfg)
                est = result.extrinsics
                loss = result.final_loss
            reports.append(
                metrics.report_errors(
                    est, gt, variant=variant, seed=trial_seed,
                    gauge_camera=opt_cfg.gauge_camera, final_loss=loss,
                )
            )
    csv_text = metrics.format_report_csv(reports, cross_seed_aggregate=True)
    with open(args.report, "w", encoding="utf-8", newline="\n") as f:
        f.write(csv_text)
    for variant, mean_rot, mean_trans, _, _ in metrics.ablation_summary(reports):
        print(f"{variant:9s} mean rot {mean_rot:10.6f} deg   mean trans {mean_trans:10.4f} mm")
    print(f"report: {args.report}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rigcal",
        description="Refine multi-camera rig extrinsics against depth-map geometry.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_dataset=False):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
        if needs_dataset:
            p.add_argument("--dataset", required=True, help="dataset directory")

    def noise_flags(p):
        p.add_argument("--rot-noise", type=float, dest="rot_noise", default=None,
                       help="per-axis rotation noise std, degrees")
        p.add_argument("--trans-noise", type=float, dest="trans_noise", default=None,
                       help="per-axis translation noise std, meters")
        p.add_argument("--depth-noise", type=float, dest="depth_noise", default=None,
                       help="relative multiplicative depth noise std")
        p.add_argument("--dropout", type=float, default=None,
                       help="fraction of depth pixels invalidated")

    def objective_flags(p):
        p.add_argument("--lambda", type=float, dest="lam", default=None,
                       help="cycle-loss weight (default 1.0)")
        p.add_argument("--no-rc", action="store_true", help="disable the reprojection constraint")
        p.add_argument("--no-mc", action="store_true", help="disable the cycle constraint")
        p.add_argument("--max-outer", type=int, dest="max_outer", default=None)
        p.add_argument("--max-inner", type=int, dest="max_inner", default=None)

    p = sub.add_parser("simulate", help="generate a synthetic dataset with ground truth")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--cameras", type=int, default=None, help="number of cameras (default 4)")
    noise_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("refine", help="refine a dataset's initial extrinsics")
    common(p, needs_dataset=True)
    objective_flags(p)
    p.add_argument("--estimate", default="estimate.json", help="output estimate file")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="evaluate an estimate against ground truth")
    common(p, needs_dataset=True)
    p.add_argument("--estimate", default="estimate.json", help="estimate file to score")
    p.add_argument("--report", default="report.csv", help="output CSV report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run the original/no_rc/no_mc/full variant protocol")
    common(p, needs_dataset=True)
    objective_flags(p)
    noise_flags(p)
    p.add_argument("--trials", type=int, default=1, help="number of trial seeds")
    p.add_argument("--report", default="ablation.csv", help="output CSV report")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DegenerateProblem, SingularNormalEquations) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (RigcalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
