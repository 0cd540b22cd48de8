"""Independent oracles and small rig builders shared by the test suite.

Everything here deliberately avoids the library's own code paths for the
quantity being checked: quaternion-based rotations, quadrature for the
SE(3) translation map, signed-distance sphere marching for ray casts, a
standalone bilinear interpolator, and a scalar reimplementation of the
triplet cycle chain.
"""

import math

import numpy as np

from rigcal.dataset import CameraRecord, CameraRig
from rigcal.geometry import CameraIntrinsics, RigidTransform
from rigcal.simulator import Scene, look_at_extrinsic, render_depth


# --- quaternion oracle --------------------------------------------------------

def quat_from_axis_angle(omega):
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega)
    if theta < 1e-300:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = omega / theta
    return np.concatenate([[math.cos(theta / 2.0)], math.sin(theta / 2.0) * axis])


def rot_from_quat(q):
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_oracle(omega):
    """Rotation matrix of a rotation vector via quaternions."""
    return rot_from_quat(quat_from_axis_angle(omega))


def quat_angle_deg(r_a, r_b):
    """Angle between two rotation matrices via the quaternion double cover."""
    q_a = quat_from_rot(r_a)
    q_b = quat_from_rot(r_b)
    dot = abs(float(np.dot(q_a, q_b)))
    return math.degrees(2.0 * math.acos(min(1.0, dot)))


def quat_from_rot(r):
    m = np.asarray(r, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        return np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    i = int(np.argmax(np.diag(m)))
    j, k = (i + 1) % 3, (i + 2) % 3
    s = math.sqrt(max(1.0 + m[i, i] - m[j, j] - m[k, k], 0.0)) * 2
    q = np.zeros(4)
    q[0] = (m[k, j] - m[j, k]) / s
    q[1 + i] = 0.25 * s
    q[1 + j] = (m[j, i] + m[i, j]) / s
    q[1 + k] = (m[k, i] + m[i, k]) / s
    return q


def translation_map_oracle(omega, n_steps=2000):
    """V matrix of SE(3) exp via Simpson quadrature of exp(s * hat(omega))."""
    if n_steps % 2:
        n_steps += 1
    acc = np.zeros((3, 3))
    for idx in range(n_steps + 1):
        s = idx / n_steps
        weight = 1.0 if idx in (0, n_steps) else (4.0 if idx % 2 else 2.0)
        acc += weight * rotation_oracle(s * np.asarray(omega))
    return acc / (3.0 * n_steps)


# --- scene oracles -------------------------------------------------------------

def scene_free_sdf(scene: Scene, points):
    """Distance from interior points to the nearest scene surface."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    room = np.minimum(p - scene.room_min, scene.room_max - p).min(axis=1)
    d = room
    for s in range(scene.spheres.shape[0]):
        d = np.minimum(d, np.linalg.norm(p - scene.spheres[s, :3], axis=1) - scene.spheres[s, 3])
    for b in range(scene.boxes.shape[0]):
        bmin, bmax = scene.boxes[b, :3], scene.boxes[b, 3:]
        q = np.maximum(bmin - p, p - bmax)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(np.max(q, axis=1), 0.0)
        d = np.minimum(d, outside + inside)
    return d if d.shape[0] > 1 else float(d[0])


def sphere_march_distance(scene: Scene, origin, direction, t_max=50.0, tol=1e-7):
    """Brute-force nearest-hit distance by SDF marching plus bisection."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    t = 0.0
    for _ in range(100000):
        d = scene_free_sdf(scene, origin + t * direction)
        if d < tol:
            break
        t += max(d * 0.99, 1e-9)
        if t > t_max:
            return math.inf
    lo, hi = max(t - 1e-4, 0.0), t + 1e-4
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if scene_free_sdf(scene, origin + mid * direction) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- independent bilinear + cycle chain ----------------------------------------

def bilinear_oracle(depth, u, v):
    """Standalone bilinear interpolation; NaN when invalid."""
    h, w = depth.shape
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1):
        return math.nan
    x0 = min(int(math.floor(u)), w - 2)
    y0 = min(int(math.floor(v)), h - 2)
    au, av = u - x0, v - y0
    corners = [depth[y0, x0], depth[y0, x0 + 1], depth[y0 + 1, x0], depth[y0 + 1, x0 + 1]]
    if any(not (math.isfinite(c) and c > 0.0) for c in corners):
        return math.nan
    d00, d10, d01, d11 = corners
    return (1 - av) * ((1 - au) * d00 + au * d10) + av * ((1 - au) * d01 + au * d11)


def cycle_chain_oracle(rig, extrinsics, triplet, world_point, normalize=True):
    """Scalar hop-by-hop evaluation of the triplet cycle residual.

    Returns a 2-vector or None when any hop is invalid. Uses plain float
    arithmetic and its own bilinear lookup.
    """
    i, j, k = triplet

    def apply(t: RigidTransform, p):
        return t.rotation @ np.asarray(p, dtype=float) + t.translation

    def proj(intr: CameraIntrinsics, p):
        if p[2] <= 1e-9:
            return None
        u = intr.fx * p[0] / p[2] + intr.cx
        v = intr.fy * p[1] / p[2] + intr.cy
        if not (0.0 <= u <= intr.width - 1 and 0.0 <= v <= intr.height - 1):
            return None
        return u, v

    def backproj(intr, u, v, d):
        return np.array([(u - intr.cx) * d / intr.fx, (v - intr.cy) * d / intr.fy, d])

    def hop(cam_from_world_point, cam_idx):
        intr = rig.cameras[cam_idx].intrinsics
        pix = proj(intr, cam_from_world_point)
        if pix is None:
            return None
        d = bilinear_oracle(rig.cameras[cam_idx].depth, *pix)
        if math.isnan(d):
            return None
        return backproj(intr, pix[0], pix[1], d)

    t_i, t_j, t_k = extrinsics[i], extrinsics[j], extrinsics[k]
    x_j = hop(apply(t_j, world_point), j)
    if x_j is None:
        return None
    rel_kj = RigidTransform(
        t_k.rotation @ t_j.rotation.T,
        t_k.translation - t_k.rotation @ t_j.rotation.T @ t_j.translation,
    )
    x_k = hop(apply(rel_kj, x_j), k)
    if x_k is None:
        return None
    rel_ik = RigidTransform(
        t_i.rotation @ t_k.rotation.T,
        t_i.translation - t_i.rotation @ t_k.rotation.T @ t_k.translation,
    )
    intr_i = rig.cameras[i].intrinsics
    closed = apply(rel_ik, x_k)
    pix_cyc = proj(intr_i, closed)
    if pix_cyc is None:
        return None
    e = apply(t_i, world_point)
    if e[2] <= 1e-9:
        return None
    ref = (intr_i.fx * e[0] / e[2] + intr_i.cx, intr_i.fy * e[1] / e[2] + intr_i.cy)
    scale = 1.0 / intr_i.fx if normalize else 1.0
    return np.array([scale * (pix_cyc[0] - ref[0]), scale * (pix_cyc[1] - ref[1])])


# --- rig builders ---------------------------------------------------------------

def small_intrinsics(width=160, height=120, fov_mult=0.5):
    return CameraIntrinsics(
        fx=width * fov_mult, fy=width * fov_mult,
        cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
    )


def rig_from_poses(scene, intrinsics, poses):
    """Render a rig with explicit ground-truth extrinsics (init = gt)."""
    records = []
    for cam_id, pose in enumerate(poses):
        depth = render_depth(scene, intrinsics, pose)
        records.append(
            CameraRecord(
                id=cam_id,
                intrinsics=intrinsics,
                init_extrinsic=pose,
                gt_extrinsic=pose,
                depth=depth,
                depth_file=f"depth_{cam_id:03d}.bin",
            )
        )
    rig = CameraRig(cameras=records)
    rig.validate()
    return rig


def frontal_wall_rig(n_cameras=2, wall_x=3.0, spacing=0.4, intrinsics=None, obstacles=None):
    """Cameras side by side looking straight at the wall x = wall_x."""
    scene_kwargs = dict(room_min=[-3.0, -3.0, 0.0], room_max=[wall_x, 3.0, 3.0])
    if obstacles:
        scene_kwargs.update(obstacles)
    scene = Scene(**scene_kwargs)
    intrinsics = intrinsics or small_intrinsics()
    poses = []
    for c in range(n_cameras):
        y = (c - (n_cameras - 1) / 2.0) * spacing
        position = np.array([0.0, y, 1.5])
        poses.append(look_at_extrinsic(position, position + np.array([1.0, 0.0, 0.0])))
    return scene, rig_from_poses(scene, intrinsics, poses)


def precision_rig_config():
    """The high-precision cluster rig used by the zero-residual checks.

    Three nearly parallel cameras share a frontal wall (so bilinear depth
    lookups are essentially exact), plus one camera facing away; depth
    resolution is high enough that interpolation error sits far below the
    tolerances under test.
    """
    from rigcal.simulator import RigLayout

    width, height = 1024, 768
    intr = CameraIntrinsics(
        fx=1280.0, fy=1280.0, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0,
        width=width, height=height,
    )
    scene = Scene(room_min=[-1.0, -1.0, 0.0], room_max=[1.0, 1.0, 2.0])
    layout = RigLayout(
        n_cameras=4, radius=0.5, height=1.0, intrinsics=intr,
        angles_deg=[-8.0, 0.0, 8.0, 180.0],
    )
    return scene, layout
