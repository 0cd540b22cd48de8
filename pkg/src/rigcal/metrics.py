"""Evaluation metrics: rotation error (degrees), translation error (millimeters).

The objective only determines extrinsics up to a common world-frame
transform, so estimates are first gauge-aligned: relative poses anchored
at the gauge camera are re-expressed in the reference's frame. Errors
are then reported per non-gauge camera. All functions are pure.

CSV schema (also used by ablation summaries)::

    variant,seed,camera_id,rot_error_deg,trans_error_mm

plus aggregate rows with camera_id = "mean" / "max"; cross-seed
aggregates use seed = "all".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CountMismatch, EmptyVariant
from .geometry import RigidTransform, compose, inverse

CSV_HEADER = "variant,seed,camera_id,rot_error_deg,trans_error_mm"


@dataclass
class CalibrationReport:
    variant: str                  # full | no_rc | no_mc | original | estimate
    seed: int
    camera_ids: list[int]         # gauge camera excluded
    rot_errors_deg: list[float]
    trans_errors_mm: list[float]
    final_loss: dict | None = None

    @property
    def mean_rot_deg(self) -> float:
        return float(np.mean(self.rot_errors_deg))

    @property
    def mean_trans_mm(self) -> float:
        return float(np.mean(self.trans_errors_mm))

    @property
    def max_rot_deg(self) -> float:
        return float(np.max(self.rot_errors_deg))

    @property
    def max_trans_mm(self) -> float:
        return float(np.max(self.trans_errors_mm))


def gauge_align(
    est: list[RigidTransform], ref: list[RigidTransform], gauge_camera: int = 0
) -> list[RigidTransform]:
    """Map the estimated set onto the reference's world frame.

    Relative poses anchored at the gauge camera are preserved exactly:
    the result is ``rel(est, gauge->i) o ref[gauge]``.
    """
    if len(est) != len(ref):
        raise CountMismatch(f"estimate has {len(est)} cameras, reference has {len(ref)}")
    anchor_inv = inverse(est[gauge_camera])
    return [compose(compose(t, anchor_inv), ref[gauge_camera]) for t in est]


def rotation_error_deg(rot_est: np.ndarray, rot_ref: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees.

    atan2 of the (sine, cosine) pair of the relative rotation rather
    than acos of the cosine alone: acos turns the O(eps) trace deficit
    of float rotation products into sqrt(eps)-sized angles, which would
    report ~1e-6 deg for bit-identical inputs.
    """
    m = rot_est @ rot_ref.T
    s = 0.5 * math.sqrt(
        (m[2, 1] - m[1, 2]) ** 2 + (m[0, 2] - m[2, 0]) ** 2 + (m[1, 0] - m[0, 1]) ** 2
    )
    c = 0.5 * (float(np.trace(m)) - 1.0)
    return math.degrees(math.atan2(s, min(1.0, max(-1.0, c))))


def translation_error_mm(t_est: np.ndarray, t_ref: np.ndarray) -> float:
    """Euclidean distance between translation vectors (meters in, mm out)."""
    return 1000.0 * float(np.linalg.norm(np.asarray(t_est) - np.asarray(t_ref)))


def report_errors(
    est: list[RigidTransform],
    ref: list[RigidTransform],
    variant: str,
    seed: int,
    gauge_camera: int = 0,
    final_loss: dict | None = None,
) -> CalibrationReport:
    """Per-camera errors of the gauge-anchored relative poses.

    Rotation and translation are compared between est's and ref's
    relative poses gauge->i, which makes both metrics exactly invariant
    to a common world-frame transform applied to either set.
    """
    if len(est) != len(ref):
        raise CountMismatch(f"estimate has {len(est)} cameras, reference has {len(ref)}")
    est_anchor = inverse(est[gauge_camera])
    ref_anchor = inverse(ref[gauge_camera])
    ids, rots, trans = [], [], []
    for i in range(len(est)):
        if i == gauge_camera:
            continue
        rel_est = compose(est[i], est_anchor)
        rel_ref = compose(ref[i], ref_anchor)
        ids.append(i)
        rots.append(rotation_error_deg(rel_est.rotation, rel_ref.rotation))
        trans.append(translation_error_mm(rel_est.translation, rel_ref.translation))
    return CalibrationReport(
        variant=variant,
        seed=seed,
        camera_ids=ids,
        rot_errors_deg=rots,
        trans_errors_mm=trans,
        final_loss=final_loss,
    )


def report_rows(report: CalibrationReport) -> list[str]:
    rows = [
        f"{report.variant},{report.seed},{cid},{rot!r},{trans!r}"
        for cid, rot, trans in zip(
            report.camera_ids, report.rot_errors_deg, report.trans_errors_mm
        )
    ]
    rows.append(f"{report.variant},{report.seed},mean,{report.mean_rot_deg!r},{report.mean_trans_mm!r}")
    rows.append(f"{report.variant},{report.seed},max,{report.max_rot_deg!r},{report.max_trans_mm!r}")
    return rows


def ablation_summary(reports: list[CalibrationReport], variants: list[str] | None = None):
    """Per-variant mean/max errors across seeds: list of (variant, mean_rot, mean_trans, max_rot, max_trans)."""
    if variants is None:
        variants = []
        for r in reports:
            if r.variant not in variants:
                variants.append(r.variant)
    out = []
    for variant in variants:
        group = [r for r in reports if r.variant == variant]
        if not group:
            raise EmptyVariant(f"no reports for variant {variant!r}")
        rots = np.concatenate([r.rot_errors_deg for r in group])
        trans = np.concatenate([r.trans_errors_mm for r in group])
        out.append(
            (
                variant,
                float(np.mean(rots)),
                float(np.mean(trans)),
                float(np.max(rots)),
                float(np.max(trans)),
            )
        )
    return out


def format_report_csv(reports: list[CalibrationReport], cross_seed_aggregate: bool = False) -> str:
    lines = [CSV_HEADER]
    for report in reports:
        lines.extend(report_rows(report))
    if cross_seed_aggregate:
        for variant, mean_rot, mean_trans, max_rot, max_trans in ablation_summary(reports):
            lines.append(f"{variant},all,mean,{mean_rot!r},{mean_trans!r}")
            lines.append(f"{variant},all,max,{max_rot!r},{max_trans!r}")
    return "\n".join(lines) + "\n"
