"""Vectorized numpy backend for the hot kernels.

Math is kept term-for-term identical to the numba backend so the two
agree to floating-point noise; see tests/test_kernels.py.
"""

from __future__ import annotations

import numpy as np

from .common import EPS_T, MIN_Z

NAME = "numpy"

_RENDER_CHUNK = 262144  # rays per chunk, keeps peak memory modest at high res


def _finite_pos(d: np.ndarray) -> np.ndarray:
    return np.isfinite(d) & (d > 0.0)


def bilinear_batch(depth_map: np.ndarray, uv: np.ndarray):
    """Bilinear value, gradient, and validity at continuous pixels.

    Returns (value, grad_u, grad_v, valid); invalid lanes hold 0.
    """
    h, w = depth_map.shape
    m = uv.shape[0]
    if w < 2 or h < 2:
        z = np.zeros(m)
        return z, z.copy(), z.copy(), np.zeros(m, dtype=bool)
    u = uv[:, 0]
    v = uv[:, 1]
    inb = (u >= 0.0) & (u <= w - 1) & (v >= 0.0) & (v <= h - 1)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(uc).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(vc).astype(np.int64), h - 2)
    au = uc - x0
    av = vc - y0
    d00 = depth_map[y0, x0]
    d10 = depth_map[y0, x0 + 1]
    d01 = depth_map[y0 + 1, x0]
    d11 = depth_map[y0 + 1, x0 + 1]
    valid = inb & _finite_pos(d00) & _finite_pos(d10) & _finite_pos(d01) & _finite_pos(d11)
    d00 = np.where(valid, d00, 1.0)
    d10 = np.where(valid, d10, 1.0)
    d01 = np.where(valid, d01, 1.0)
    d11 = np.where(valid, d11, 1.0)
    value = (1.0 - av) * ((1.0 - au) * d00 + au * d10) + av * ((1.0 - au) * d01 + au * d11)
    gu = (1.0 - av) * (d10 - d00) + av * (d11 - d01)
    gv = (1.0 - au) * (d01 - d00) + au * (d11 - d10)
    zero = np.zeros(m)
    return (
        np.where(valid, value, zero),
        np.where(valid, gu, zero),
        np.where(valid, gv, zero),
        valid,
    )


def cast_rays(room_min, room_max, spheres, boxes, origins, dirs):
    """Nearest positive intersection distance per ray; inf on miss."""
    m = origins.shape[0]
    best = np.full(m, np.inf)

    # closed room: exit distance through the inward-facing box walls
    for axis in range(3):
        d = dirs[:, axis]
        o = origins[:, axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hi = (room_max[axis] - o) / d
            t_lo = (room_min[axis] - o) / d
        t_axis = np.where(d > 0.0, t_hi, np.where(d < 0.0, t_lo, np.inf))
        best = np.minimum(best, np.where(t_axis > EPS_T, t_axis, np.inf))

    for s in range(spheres.shape[0]):
        center = spheres[s, :3]
        radius = spheres[s, 3]
        oc = origins - center
        b = np.einsum("ij,ij->i", oc, dirs)
        c = np.einsum("ij,ij->i", oc, oc) - radius * radius
        disc = b * b - c
        hit = disc >= 0.0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t1 = -b - sq
        t2 = -b + sq
        t = np.where(t1 > EPS_T, t1, np.where(t2 > EPS_T, t2, np.inf))
        best = np.minimum(best, np.where(hit, t, np.inf))

    for bi in range(boxes.shape[0]):
        bmin = boxes[bi, :3]
        bmax = boxes[bi, 3:]
        tnear = np.full(m, -np.inf)
        tfar = np.full(m, np.inf)
        ok = np.ones(m, dtype=bool)
        for axis in range(3):
            d = dirs[:, axis]
            o = origins[:, axis]
            parallel = d == 0.0
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (bmin[axis] - o) / d
                tb = (bmax[axis] - o) / d
            lo = np.minimum(ta, tb)
            hi = np.maximum(ta, tb)
            tnear = np.where(parallel, tnear, np.maximum(tnear, lo))
            tfar = np.where(parallel, tfar, np.minimum(tfar, hi))
            ok &= np.where(parallel, (o >= bmin[axis]) & (o <= bmax[axis]), True)
        hit = ok & (tnear <= tfar) & (tfar > EPS_T)
        t = np.where(tnear > EPS_T, tnear, tfar)  # rays starting inside exit through tfar
        best = np.minimum(best, np.where(hit, t, np.inf))

    return best


def render_depth(room_min, room_max, spheres, boxes, intr, cam_center, rot_cam_to_world):
    """Depth image (z-coordinate of the hit point in camera coordinates)."""
    fx, fy, cx, cy = intr[0], intr[1], intr[2], intr[3]
    width = int(intr[4])
    height = int(intr[5])
    out = np.empty(height * width)
    total = height * width
    cols = np.arange(width, dtype=float)
    for start in range(0, total, _RENDER_CHUNK):
        stop = min(start + _RENDER_CHUNK, total)
        idx = np.arange(start, stop)
        u = cols[idx % width]
        v = (idx // width).astype(float)
        dx = (u - cx) / fx
        dy = (v - cy) / fy
        norm = np.sqrt(dx * dx + dy * dy + 1.0)
        dirs_cam = np.stack([dx / norm, dy / norm, 1.0 / norm], axis=1)
        dirs_world = dirs_cam @ rot_cam_to_world.T
        origins = np.broadcast_to(cam_center, dirs_world.shape)
        t = cast_rays(room_min, room_max, spheres, boxes, origins, dirs_world)
        out[start:stop] = t * dirs_cam[:, 2]
    return out.reshape(height, width)


def _skew_batch(p: np.ndarray) -> np.ndarray:
    m = p.shape[0]
    s = np.zeros((m, 3, 3))
    s[:, 0, 1] = -p[:, 2]
    s[:, 0, 2] = p[:, 1]
    s[:, 1, 0] = p[:, 2]
    s[:, 1, 2] = -p[:, 0]
    s[:, 2, 0] = -p[:, 1]
    s[:, 2, 1] = p[:, 0]
    return s


def _project_batch(intr, pts, valid):
    """Pixels of camera-frame points plus validity (z > 0, in bounds)."""
    z = pts[:, 2]
    valid = valid & (z > MIN_Z)
    zs = np.where(valid, z, 1.0)
    u = intr[0] * pts[:, 0] / zs + intr[2]
    v = intr[1] * pts[:, 1] / zs + intr[3]
    valid = valid & (u >= 0.0) & (u <= intr[4] - 1.0) & (v >= 0.0) & (v <= intr[5] - 1.0)
    return np.stack([u, v], axis=1), zs, valid


def _proj_jacobian(intr, pts, zs):
    """d(pixel)/d(point) for camera-frame points, (m, 2, 3)."""
    m = pts.shape[0]
    jac = np.zeros((m, 2, 3))
    jac[:, 0, 0] = intr[0] / zs
    jac[:, 0, 2] = -intr[0] * pts[:, 0] / (zs * zs)
    jac[:, 1, 1] = intr[1] / zs
    jac[:, 1, 2] = -intr[1] * pts[:, 1] / (zs * zs)
    return jac


def geo_blocks(uv, depth_i, depth_j, intr_i, intr_j, rot_ji, t_ji, want_jac):
    """Depth-transfer residuals for one ordered camera pair.

    Returns (residual (m,), valid (m,), jac_i (m,6), jac_j (m,6)); the
    Jacobians are with respect to left-multiplied tangent perturbations
    of the source (i) and target (j) extrinsics.
    """
    m = uv.shape[0]
    d_i, _, _, valid = bilinear_batch(depth_i, uv)
    ds = np.where(valid, d_i, 1.0)
    x_i = np.stack(
        [
            (uv[:, 0] - intr_i[2]) * ds / intr_i[0],
            (uv[:, 1] - intr_i[3]) * ds / intr_i[1],
            ds,
        ],
        axis=1,
    )
    y = x_i @ rot_ji.T + t_ji
    pix, zs, valid = _project_batch(intr_j, y, valid)
    d_j, gu, gv, bvalid = bilinear_batch(depth_j, pix)
    valid = valid & bvalid
    res = np.where(valid, y[:, 2] - d_j, 0.0)

    jac_i = np.zeros((m, 6))
    jac_j = np.zeros((m, 6))
    if want_jac:
        # dr/dY = e_z - (gu, gv) . dpix/dY
        dr_dy = np.stack(
            [
                -gu * intr_j[0] / zs,
                -gv * intr_j[1] / zs,
                1.0 + (gu * intr_j[0] * y[:, 0] + gv * intr_j[1] * y[:, 1]) / (zs * zs),
            ],
            axis=1,
        )
        # target camera: dY/dxi_j = [-skew(Y) | I]
        jac_j[:, 0:3] = -np.cross(dr_dy, y)
        jac_j[:, 3:6] = dr_dy
        # source camera: dY/dxi_i = [R_ji skew(X_i) | -R_ji]
        q = dr_dy @ rot_ji
        jac_i[:, 0:3] = np.cross(q, x_i)
        jac_i[:, 3:6] = -q
        off = ~valid
        jac_i[off] = 0.0
        jac_j[off] = 0.0
    return res, valid, jac_i, jac_j


def cycle_blocks(
    points,
    depth_j,
    depth_k,
    intr_i,
    intr_j,
    intr_k,
    rot_i,
    t_i,
    rot_j,
    t_j,
    rot_kj,
    t_kj,
    rot_ik,
    t_ik,
    scale,
    want_jac,
):
    """Triplet cycle residuals for world points anchored in camera i.

    The point is pushed i -> j -> k -> i, re-anchoring to the observed
    depth at each intermediate camera, and compared against its direct
    projection into camera i. Residuals are 2-vectors in pixels times
    ``scale``. Jacobian layout: columns 0:6 camera i, 6:12 camera j,
    12:18 camera k, split into three (m, 2, 6) blocks on return.
    """
    m = points.shape[0]
    valid = np.ones(m, dtype=bool)

    def matvec(rot, t, pts):
        return pts @ rot.T + t

    # hop 1: world -> camera j, re-anchor to observed depth
    a = matvec(rot_j, t_j, points)
    d_a = np.zeros((m, 3, 18))
    d_a[:, :, 6:9] = -_skew_batch(a)
    d_a[:, 0, 9] = 1.0
    d_a[:, 1, 10] = 1.0
    d_a[:, 2, 11] = 1.0
    pix_j, zs_a, valid = _project_batch(intr_j, a, valid)
    dj, gu_j, gv_j, bval = bilinear_batch(depth_j, pix_j)
    valid = valid & bval
    du_j = np.matmul(_proj_jacobian(intr_j, a, zs_a), d_a)
    dd_j = np.einsum("sc,sck->sk", np.stack([gu_j, gv_j], axis=1), du_j)
    x_j = np.stack(
        [
            (pix_j[:, 0] - intr_j[2]) * dj / intr_j[0],
            (pix_j[:, 1] - intr_j[3]) * dj / intr_j[1],
            dj,
        ],
        axis=1,
    )
    b_u = np.zeros((m, 3, 2))
    b_u[:, 0, 0] = dj / intr_j[0]
    b_u[:, 1, 1] = dj / intr_j[1]
    b_d = np.stack(
        [(pix_j[:, 0] - intr_j[2]) / intr_j[0], (pix_j[:, 1] - intr_j[3]) / intr_j[1], np.ones(m)],
        axis=1,
    )
    d_xj = np.matmul(b_u, du_j) + b_d[:, :, None] * dd_j[:, None, :]

    # hop 2: camera j -> camera k, re-anchor again
    b = matvec(rot_kj, t_kj, x_j)
    d_b = np.matmul(rot_kj, d_xj)
    d_b[:, :, 6:9] += np.matmul(rot_kj, _skew_batch(x_j))
    d_b[:, :, 9:12] += -rot_kj
    d_b[:, :, 12:15] += -_skew_batch(b)
    d_b[:, 0, 15] += 1.0
    d_b[:, 1, 16] += 1.0
    d_b[:, 2, 17] += 1.0
    pix_k, zs_b, valid = _project_batch(intr_k, b, valid)
    dk, gu_k, gv_k, bval = bilinear_batch(depth_k, pix_k)
    valid = valid & bval
    du_k = np.matmul(_proj_jacobian(intr_k, b, zs_b), d_b)
    dd_k = np.einsum("sc,sck->sk", np.stack([gu_k, gv_k], axis=1), du_k)
    x_k = np.stack(
        [
            (pix_k[:, 0] - intr_k[2]) * dk / intr_k[0],
            (pix_k[:, 1] - intr_k[3]) * dk / intr_k[1],
            dk,
        ],
        axis=1,
    )
    b_u2 = np.zeros((m, 3, 2))
    b_u2[:, 0, 0] = dk / intr_k[0]
    b_u2[:, 1, 1] = dk / intr_k[1]
    b_d2 = np.stack(
        [(pix_k[:, 0] - intr_k[2]) / intr_k[0], (pix_k[:, 1] - intr_k[3]) / intr_k[1], np.ones(m)],
        axis=1,
    )
    d_xk = np.matmul(b_u2, du_k) + b_d2[:, :, None] * dd_k[:, None, :]

    # hop 3: camera k -> camera i, project
    c = matvec(rot_ik, t_ik, x_k)
    d_c = np.matmul(rot_ik, d_xk)
    d_c[:, :, 12:15] += np.matmul(rot_ik, _skew_batch(x_k))
    d_c[:, :, 15:18] += -rot_ik
    d_c[:, :, 0:3] += -_skew_batch(c)
    d_c[:, 0, 3] += 1.0
    d_c[:, 1, 4] += 1.0
    d_c[:, 2, 5] += 1.0
    pix_cyc, zs_c, valid = _project_batch(intr_i, c, valid)
    du_cyc = np.matmul(_proj_jacobian(intr_i, c, zs_c), d_c)

    # reference: direct projection of the world point into camera i
    e = matvec(rot_i, t_i, points)
    z_e = e[:, 2]
    valid = valid & (z_e > MIN_Z)
    zs_e = np.where(z_e > MIN_Z, z_e, 1.0)
    pix_ref = np.stack(
        [intr_i[0] * e[:, 0] / zs_e + intr_i[2], intr_i[1] * e[:, 1] / zs_e + intr_i[3]], axis=1
    )
    d_e = np.zeros((m, 3, 18))
    d_e[:, :, 0:3] = -_skew_batch(e)
    d_e[:, 0, 3] = 1.0
    d_e[:, 1, 4] = 1.0
    d_e[:, 2, 5] = 1.0
    du_ref = np.matmul(_proj_jacobian(intr_i, e, zs_e), d_e)

    res = scale * (pix_cyc - pix_ref)
    res[~valid] = 0.0
    jac = np.zeros((m, 2, 18))
    if want_jac:
        jac = scale * (du_cyc - du_ref)
        jac[~valid] = 0.0
    return res, valid, jac[:, :, 0:6], jac[:, :, 6:12], jac[:, :, 12:18]
