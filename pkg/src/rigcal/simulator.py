"""Synthetic rig generator with exact ground truth.

Scenes are analytic: a closed axis-aligned box room (so every ray hits
something and depth maps are dense) plus optional spheres and axis-aligned
box obstacles. Depth maps store the z-coordinate of the hit point in
camera coordinates, not the ray length.

Noise is applied after ground-truth rendering: multiplicative Gaussian
depth noise, pixel dropout, and a left-multiplied tangent perturbation of
the true extrinsics that stands in for an imperfect upstream initializer.
Everything is a pure function of (layout, scene, noise, seed); per-camera
noise uses the substream scheme documented in ``rigcal.rng``.

Rendering per-pixel work is independent, so backends may parallelize,
but the output must equal the sequential render bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import CameraRecord, CameraRig
from .errors import CameraOutsideScene, InvalidValue
from .geometry import CameraIntrinsics, RigidTransform, TangentVector, compose, exp_se3, inverse
from .rng import (
    STREAM_DEPTH_NOISE,
    STREAM_DROPOUT,
    STREAM_EXTRINSIC_PERTURB,
    substream,
)


@dataclass(frozen=True)
class Scene:
    """Closed box room with optional sphere/box obstacles, all in meters."""

    room_min: np.ndarray
    room_max: np.ndarray
    spheres: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))  # cx,cy,cz,r rows
    boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))    # min xyz, max xyz rows

    def __post_init__(self):
        object.__setattr__(self, "room_min", np.asarray(self.room_min, dtype=float).reshape(3))
        object.__setattr__(self, "room_max", np.asarray(self.room_max, dtype=float).reshape(3))
        object.__setattr__(self, "spheres", np.asarray(self.spheres, dtype=float).reshape(-1, 4))
        object.__setattr__(self, "boxes", np.asarray(self.boxes, dtype=float).reshape(-1, 6))
        if not np.all(self.room_max > self.room_min):
            raise InvalidValue("room extents must be positive on every axis")
        for s in range(self.spheres.shape[0]):
            c, r = self.spheres[s, :3], self.spheres[s, 3]
            if r <= 0.0:
                raise InvalidValue(f"sphere {s}: radius must be positive")
            if np.any(c - r < self.room_min) or np.any(c + r > self.room_max):
                raise InvalidValue(f"sphere {s} is not inside the room")
        for b in range(self.boxes.shape[0]):
            bmin, bmax = self.boxes[b, :3], self.boxes[b, 3:]
            if not np.all(bmax > bmin):
                raise InvalidValue(f"box {b}: extents must be positive")
            if np.any(bmin < self.room_min) or np.any(bmax > self.room_max):
                raise InvalidValue(f"box {b} is not inside the room")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.room_min + self.room_max)

    def contains(self, point: np.ndarray, margin: float = 0.0) -> bool:
        """True when the point is in free space (inside room, outside obstacles)."""
        p = np.asarray(point, dtype=float)
        if np.any(p <= self.room_min + margin) or np.any(p >= self.room_max - margin):
            return False
        for s in range(self.spheres.shape[0]):
            if np.linalg.norm(p - self.spheres[s, :3]) <= self.spheres[s, 3] + margin:
                return False
        for b in range(self.boxes.shape[0]):
            if np.all(p >= self.boxes[b, :3] - margin) and np.all(p <= self.boxes[b, 3:] + margin):
                return False
        return True


@dataclass(frozen=True)
class NoiseModel:
    """Perturbations applied to an otherwise exact dataset."""

    depth_sigma_rel: float = 0.0    # multiplicative Gaussian std on depth
    rot_perturb_deg: float = 0.0    # per-axis std of initial-extrinsic rotation noise
    trans_perturb_m: float = 0.0    # per-axis std of initial-extrinsic translation noise
    dropout_rate: float = 0.0       # fraction of pixels invalidated
    seed: int = 0

    def __post_init__(self):
        if min(self.depth_sigma_rel, self.rot_perturb_deg, self.trans_perturb_m,
               self.dropout_rate) < 0.0:
            raise InvalidValue("noise parameters must be >= 0")
        if not self.dropout_rate < 1.0:
            raise InvalidValue("dropout_rate must be < 1")


@dataclass(frozen=True)
class RigLayout:
    """Cameras on a circle at a fixed height, all aimed at the room center."""

    n_cameras: int
    radius: float
    height: float
    intrinsics: CameraIntrinsics
    angles_deg: list[float] | None = None  # None: equally spaced starting at 0

    def __post_init__(self):
        if self.n_cameras < 2:
            raise InvalidValue("a rig needs at least 2 cameras")
        if self.radius <= 0.0:
            raise InvalidValue("layout radius must be positive")
        if self.angles_deg is not None and len(self.angles_deg) != self.n_cameras:
            raise InvalidValue("angles_deg must list one angle per camera")

    def camera_angles(self) -> list[float]:
        if self.angles_deg is not None:
            return [math.radians(a) for a in self.angles_deg]
        return [2.0 * math.pi * c / self.n_cameras for c in range(self.n_cameras)]


def look_at_extrinsic(position, target) -> RigidTransform:
    """World-to-camera transform for a camera at ``position`` looking at ``target``.

    Camera axes: +z forward, +x right, +y down; the image up direction is
    aligned with world +z (so the camera must not look straight up/down).
    """
    position = np.asarray(position, dtype=float)
    forward = np.asarray(target, dtype=float) - position
    norm = np.linalg.norm(forward)
    if norm <= 0.0:
        raise InvalidValue("camera position coincides with its target")
    z_axis = forward / norm
    up = np.array([0.0, 0.0, 1.0])
    x_axis = np.cross(z_axis, up)
    xn = np.linalg.norm(x_axis)
    if xn < 1e-12:
        raise InvalidValue("camera looks straight along the world up axis")
    x_axis = x_axis / xn
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.stack([x_axis, y_axis, z_axis], axis=0)
    return RigidTransform(rotation, -(rotation @ position))


def cast_ray(scene: Scene, origin, direction) -> float:
    """Nearest positive hit distance along a unit ray; inf on a miss."""
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise InvalidValue("ray direction must be a unit vector")
    k = kernels.active()
    t = k.cast_rays(
        scene.room_min,
        scene.room_max,
        scene.spheres,
        scene.boxes,
        np.asarray(origin, dtype=float).reshape(1, 3),
        direction.reshape(1, 3),
    )
    return float(t[0])


def _intrinsics_vec(intr: CameraIntrinsics) -> np.ndarray:
    return np.array(
        [intr.fx, intr.fy, intr.cx, intr.cy, float(intr.width), float(intr.height)]
    )


def render_depth(scene: Scene, intr: CameraIntrinsics, extrinsic: RigidTransform) -> np.ndarray:
    """Ray-cast depth map (z-coordinate per pixel center) for one camera."""
    cam_to_world = inverse(extrinsic)
    center = cam_to_world.translation
    if not scene.contains(center):
        raise CameraOutsideScene(f"camera center {center} is not in free space")
    k = kernels.active()
    return k.render_depth(
        scene.room_min,
        scene.room_max,
        scene.spheres,
        scene.boxes,
        _intrinsics_vec(intr),
        center,
        cam_to_world.rotation,
    )


def generate_dataset(layout: RigLayout, scene: Scene, noise: NoiseModel) -> CameraRig:
    """Render ground truth, then inject seeded noise; deterministic per seed.

    Per-camera draw order: extrinsic perturbation uses 3 rotation normals
    then 3 translation normals from STREAM_EXTRINSIC_PERTURB; depth noise
    is one standard-normal field from STREAM_DEPTH_NOISE; dropout one
    uniform field from STREAM_DROPOUT.
    """
    target = scene.center
    records = []
    rot_sigma = math.radians(noise.rot_perturb_deg)
    for cam_id, angle in enumerate(layout.camera_angles()):
        position = np.array(
            [layout.radius * math.cos(angle), layout.radius * math.sin(angle), layout.height]
        )
        gt = look_at_extrinsic(position, target)
        depth = render_depth(scene, layout.intrinsics, gt)

        if noise.depth_sigma_rel > 0.0:
            gen = substream(noise.seed, STREAM_DEPTH_NOISE, cam_id)
            depth = depth * (1.0 + noise.depth_sigma_rel * gen.standard_normal(depth.shape))
        if noise.dropout_rate > 0.0:
            gen = substream(noise.seed, STREAM_DROPOUT, cam_id)
            drop = gen.random(depth.shape) < noise.dropout_rate
            depth = np.where(drop, np.nan, depth)

        if rot_sigma > 0.0 or noise.trans_perturb_m > 0.0:
            gen = substream(noise.seed, STREAM_EXTRINSIC_PERTURB, cam_id)
            omega = rot_sigma * gen.standard_normal(3)
            v = noise.trans_perturb_m * gen.standard_normal(3)
            init = compose(exp_se3(TangentVector(omega, v)), gt)
        else:
            init = gt

        records.append(
            CameraRecord(
                id=cam_id,
                intrinsics=layout.intrinsics,
                init_extrinsic=init,
                gt_extrinsic=gt,
                depth=depth,
                depth_file=f"depth_{cam_id:03d}.bin",
            )
        )
    rig = CameraRig(cameras=records)
    rig.validate()
    return rig


def perturb_rig(rig: CameraRig, noise: NoiseModel) -> CameraRig:
    """Redraw noisy initial extrinsics (and optional depth noise) on an existing rig.

    Ground truth is required; depth noise stacks on top of whatever the
    rig's depth maps already contain. Same substream scheme as
    ``generate_dataset``, so a trial is fully determined by ``noise.seed``.
    """
    rot_sigma = math.radians(noise.rot_perturb_deg)
    records = []
    for cam in rig.cameras:
        if cam.gt_extrinsic is None:
            raise InvalidValue(f"camera {cam.id}: perturbation needs ground-truth extrinsics")
        depth = cam.depth
        if noise.depth_sigma_rel > 0.0:
            gen = substream(noise.seed, STREAM_DEPTH_NOISE, cam.id)
            depth = depth * (1.0 + noise.depth_sigma_rel * gen.standard_normal(depth.shape))
        if noise.dropout_rate > 0.0:
            gen = substream(noise.seed, STREAM_DROPOUT, cam.id)
            depth = np.where(gen.random(depth.shape) < noise.dropout_rate, np.nan, depth)
        if rot_sigma > 0.0 or noise.trans_perturb_m > 0.0:
            gen = substream(noise.seed, STREAM_EXTRINSIC_PERTURB, cam.id)
            omega = rot_sigma * gen.standard_normal(3)
            v = noise.trans_perturb_m * gen.standard_normal(3)
            init = compose(exp_se3(TangentVector(omega, v)), cam.gt_extrinsic)
        else:
            init = cam.gt_extrinsic
        records.append(
            CameraRecord(
                id=cam.id,
                intrinsics=cam.intrinsics,
                init_extrinsic=init,
                gt_extrinsic=cam.gt_extrinsic,
                depth=depth,
                depth_file=cam.depth_file,
            )
        )
    return CameraRig(cameras=records, depth_unit=rig.depth_unit)


def covisible_fraction(rig: CameraRig, cam_i: int, cam_j: int, stride: int = 2,
                       rel_tol: float = 0.02) -> float:
    """Fraction of camera i's valid pixels observed consistently by camera j.

    Uses ground-truth extrinsics; a pixel counts as co-visible when its
    transfer lands in j's image with matching depth (within ``rel_tol``
    relatively or 2 cm absolutely).
    """
    ci = rig.cameras[cam_i]
    cj = rig.cameras[cam_j]
    if ci.gt_extrinsic is None or cj.gt_extrinsic is None:
        raise InvalidValue("co-visibility check needs ground-truth extrinsics")
    intr_i, intr_j = ci.intrinsics, cj.intrinsics
    vs, us = np.meshgrid(
        np.arange(0, intr_i.height, stride, dtype=float),
        np.arange(0, intr_i.width, stride, dtype=float),
        indexing="ij",
    )
    u = us.ravel()
    v = vs.ravel()
    d = ci.depth[::stride, ::stride].ravel()
    ok = np.isfinite(d) & (d > 0.0)
    x = np.stack(
        [(u - intr_i.cx) * d / intr_i.fx, (v - intr_i.cy) * d / intr_i.fy, d], axis=1
    )
    rel = compose(cj.gt_extrinsic, inverse(ci.gt_extrinsic))
    y = x @ rel.rotation.T + rel.translation
    z = y[:, 2]
    ok_z = ok & (z > 1e-9)
    zs = np.where(ok_z, z, 1.0)
    up = intr_j.fx * y[:, 0] / zs + intr_j.cx
    vp = intr_j.fy * y[:, 1] / zs + intr_j.cy
    inb = (up >= 0) & (up <= intr_j.width - 1) & (vp >= 0) & (vp <= intr_j.height - 1)
    k = kernels.active()
    dj, _, _, dj_ok = k.bilinear_batch(cj.depth, np.stack([up, vp], axis=1))
    agree = np.abs(z - dj) <= np.maximum(0.02, rel_tol * np.abs(z))
    covis = ok_z & inb & dj_ok & agree
    total = int(np.count_nonzero(ok))
    return float(np.count_nonzero(covis)) / max(total, 1)


# Default benchmark configuration: an empty 6x6x3 m room watched by four
# elevated cameras looking down at the room center. The downward tilt is
# what makes every camera pair (including opposite ones) share floor area
# around the center; a mid-height inward-looking ring would leave opposite
# cameras with no common surface at all.
DEFAULT_INTRINSICS = CameraIntrinsics(fx=160.0, fy=160.0, cx=159.5, cy=119.5,
                                      width=320, height=240)


def default_scene() -> Scene:
    return Scene(room_min=np.array([-3.0, -3.0, 0.0]), room_max=np.array([3.0, 3.0, 3.0]))


def default_layout(n_cameras: int = 4, intrinsics: CameraIntrinsics | None = None) -> RigLayout:
    return RigLayout(
        n_cameras=n_cameras,
        radius=1.6,
        height=2.4,
        intrinsics=intrinsics or DEFAULT_INTRINSICS,
    )
