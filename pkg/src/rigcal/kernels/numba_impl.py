"""Numba backend: the same kernels as numpy_impl, JIT-compiled scalar loops.

Compiled lazily on first call; cache=True persists the compilation across
processes. Importing this module requires numba.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .common import EPS_T, MIN_Z

NAME = "numba"


@njit(cache=True)
def _bilinear(depth_map, u, v):
    h, w = depth_map.shape
    if w < 2 or h < 2 or u < 0.0 or u > w - 1 or v < 0.0 or v > h - 1:
        return 0.0, 0.0, 0.0, False
    x0 = int(math.floor(u))
    if x0 > w - 2:
        x0 = w - 2
    y0 = int(math.floor(v))
    if y0 > h - 2:
        y0 = h - 2
    au = u - x0
    av = v - y0
    d00 = depth_map[y0, x0]
    d10 = depth_map[y0, x0 + 1]
    d01 = depth_map[y0 + 1, x0]
    d11 = depth_map[y0 + 1, x0 + 1]
    if not (math.isfinite(d00) and d00 > 0.0):
        return 0.0, 0.0, 0.0, False
    if not (math.isfinite(d10) and d10 > 0.0):
        return 0.0, 0.0, 0.0, False
    if not (math.isfinite(d01) and d01 > 0.0):
        return 0.0, 0.0, 0.0, False
    if not (math.isfinite(d11) and d11 > 0.0):
        return 0.0, 0.0, 0.0, False
    value = (1.0 - av) * ((1.0 - au) * d00 + au * d10) + av * ((1.0 - au) * d01 + au * d11)
    gu = (1.0 - av) * (d10 - d00) + av * (d11 - d01)
    gv = (1.0 - au) * (d01 - d00) + au * (d11 - d10)
    return value, gu, gv, True


def bilinear_batch(depth_map, uv):
    """Python wrapper matching the numpy backend's batch signature."""
    return _bilinear_batch(depth_map, np.ascontiguousarray(uv, dtype=np.float64))


@njit(cache=True)
def _bilinear_batch(depth_map, uv):
    m = uv.shape[0]
    value = np.zeros(m)
    gu = np.zeros(m)
    gv = np.zeros(m)
    valid = np.zeros(m, dtype=np.bool_)
    for s in range(m):
        value[s], gu[s], gv[s], valid[s] = _bilinear(depth_map, uv[s, 0], uv[s, 1])
    return value, gu, gv, valid


@njit(cache=True)
def _cast_ray(room_min, room_max, spheres, boxes, ox, oy, oz, dx, dy, dz):
    best = np.inf
    # closed room: exit through the inward-facing walls
    for axis in range(3):
        if axis == 0:
            o = ox
            d = dx
        elif axis == 1:
            o = oy
            d = dy
        else:
            o = oz
            d = dz
        if d > 0.0:
            t = (room_max[axis] - o) / d
        elif d < 0.0:
            t = (room_min[axis] - o) / d
        else:
            t = np.inf
        if t > EPS_T and t < best:
            best = t

    for s in range(spheres.shape[0]):
        ocx = ox - spheres[s, 0]
        ocy = oy - spheres[s, 1]
        ocz = oz - spheres[s, 2]
        r = spheres[s, 3]
        b = ocx * dx + ocy * dy + ocz * dz
        c = ocx * ocx + ocy * ocy + ocz * ocz - r * r
        disc = b * b - c
        if disc >= 0.0:
            sq = math.sqrt(disc)
            t1 = -b - sq
            t2 = -b + sq
            if t1 > EPS_T:
                t = t1
            elif t2 > EPS_T:
                t = t2
            else:
                t = np.inf
            if t < best:
                best = t

    for bi in range(boxes.shape[0]):
        tnear = -np.inf
        tfar = np.inf
        ok = True
        for axis in range(3):
            if axis == 0:
                o = ox
                d = dx
            elif axis == 1:
                o = oy
                d = dy
            else:
                o = oz
                d = dz
            bmin = boxes[bi, axis]
            bmax = boxes[bi, 3 + axis]
            if d == 0.0:
                if o < bmin or o > bmax:
                    ok = False
            else:
                ta = (bmin - o) / d
                tb = (bmax - o) / d
                lo = min(ta, tb)
                hi = max(ta, tb)
                if lo > tnear:
                    tnear = lo
                if hi < tfar:
                    tfar = hi
        if ok and tnear <= tfar and tfar > EPS_T:
            t = tnear if tnear > EPS_T else tfar
            if t < best:
                best = t

    return best


def cast_rays(room_min, room_max, spheres, boxes, origins, dirs):
    return _cast_rays(
        np.ascontiguousarray(room_min, dtype=np.float64),
        np.ascontiguousarray(room_max, dtype=np.float64),
        np.ascontiguousarray(spheres, dtype=np.float64).reshape(-1, 4),
        np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6),
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
    )


@njit(cache=True)
def _cast_rays(room_min, room_max, spheres, boxes, origins, dirs):
    m = origins.shape[0]
    out = np.empty(m)
    for s in range(m):
        out[s] = _cast_ray(
            room_min,
            room_max,
            spheres,
            boxes,
            origins[s, 0],
            origins[s, 1],
            origins[s, 2],
            dirs[s, 0],
            dirs[s, 1],
            dirs[s, 2],
        )
    return out


def render_depth(room_min, room_max, spheres, boxes, intr, cam_center, rot_cam_to_world):
    return _render_depth(
        np.ascontiguousarray(room_min, dtype=np.float64),
        np.ascontiguousarray(room_max, dtype=np.float64),
        np.ascontiguousarray(spheres, dtype=np.float64).reshape(-1, 4),
        np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6),
        np.ascontiguousarray(intr, dtype=np.float64),
        np.ascontiguousarray(cam_center, dtype=np.float64),
        np.ascontiguousarray(rot_cam_to_world, dtype=np.float64),
    )


@njit(cache=True)
def _render_depth(room_min, room_max, spheres, boxes, intr, cam_center, rot_cw):
    fx = intr[0]
    fy = intr[1]
    cx = intr[2]
    cy = intr[3]
    width = int(intr[4])
    height = int(intr[5])
    out = np.empty((height, width))
    for row in range(height):
        for col in range(width):
            dx = (col - cx) / fx
            dy = (row - cy) / fy
            norm = math.sqrt(dx * dx + dy * dy + 1.0)
            ux = dx / norm
            uy = dy / norm
            uz = 1.0 / norm
            wx = rot_cw[0, 0] * ux + rot_cw[0, 1] * uy + rot_cw[0, 2] * uz
            wy = rot_cw[1, 0] * ux + rot_cw[1, 1] * uy + rot_cw[1, 2] * uz
            wz = rot_cw[2, 0] * ux + rot_cw[2, 1] * uy + rot_cw[2, 2] * uz
            t = _cast_ray(
                room_min, room_max, spheres, boxes,
                cam_center[0], cam_center[1], cam_center[2], wx, wy, wz,
            )
            out[row, col] = t * uz
    return out


def geo_blocks(uv, depth_i, depth_j, intr_i, intr_j, rot_ji, t_ji, want_jac):
    return _geo_blocks(
        np.ascontiguousarray(uv, dtype=np.float64),
        depth_i,
        depth_j,
        np.ascontiguousarray(intr_i, dtype=np.float64),
        np.ascontiguousarray(intr_j, dtype=np.float64),
        np.ascontiguousarray(rot_ji, dtype=np.float64),
        np.ascontiguousarray(t_ji, dtype=np.float64),
        bool(want_jac),
    )


@njit(cache=True)
def _geo_blocks(uv, depth_i, depth_j, intr_i, intr_j, rot_ji, t_ji, want_jac):
    m = uv.shape[0]
    res = np.zeros(m)
    valid = np.zeros(m, dtype=np.bool_)
    jac_i = np.zeros((m, 6))
    jac_j = np.zeros((m, 6))
    fxi = intr_i[0]
    fyi = intr_i[1]
    cxi = intr_i[2]
    cyi = intr_i[3]
    fxj = intr_j[0]
    fyj = intr_j[1]
    cxj = intr_j[2]
    cyj = intr_j[3]
    wj = intr_j[4]
    hj = intr_j[5]
    for s in range(m):
        u = uv[s, 0]
        v = uv[s, 1]
        di, _, _, ok = _bilinear(depth_i, u, v)
        if not ok:
            continue
        xix = (u - cxi) * di / fxi
        xiy = (v - cyi) * di / fyi
        xiz = di
        yx = rot_ji[0, 0] * xix + rot_ji[0, 1] * xiy + rot_ji[0, 2] * xiz + t_ji[0]
        yy = rot_ji[1, 0] * xix + rot_ji[1, 1] * xiy + rot_ji[1, 2] * xiz + t_ji[1]
        yz = rot_ji[2, 0] * xix + rot_ji[2, 1] * xiy + rot_ji[2, 2] * xiz + t_ji[2]
        if yz <= MIN_Z:
            continue
        up = fxj * yx / yz + cxj
        vp = fyj * yy / yz + cyj
        if up < 0.0 or up > wj - 1.0 or vp < 0.0 or vp > hj - 1.0:
            continue
        dj, gu, gv, ok2 = _bilinear(depth_j, up, vp)
        if not ok2:
            continue
        res[s] = yz - dj
        valid[s] = True
        if want_jac:
            w0 = -gu * fxj / yz
            w1 = -gv * fyj / yz
            w2 = 1.0 + (gu * fxj * yx + gv * fyj * yy) / (yz * yz)
            # target camera: rows are [-(w x Y) | w]
            jac_j[s, 0] = -(w1 * yz - w2 * yy)
            jac_j[s, 1] = -(w2 * yx - w0 * yz)
            jac_j[s, 2] = -(w0 * yy - w1 * yx)
            jac_j[s, 3] = w0
            jac_j[s, 4] = w1
            jac_j[s, 5] = w2
            # source camera: q = w R_ji, rows are [q x X_i | -q]
            q0 = w0 * rot_ji[0, 0] + w1 * rot_ji[1, 0] + w2 * rot_ji[2, 0]
            q1 = w0 * rot_ji[0, 1] + w1 * rot_ji[1, 1] + w2 * rot_ji[2, 1]
            q2 = w0 * rot_ji[0, 2] + w1 * rot_ji[1, 2] + w2 * rot_ji[2, 2]
            jac_i[s, 0] = q1 * xiz - q2 * xiy
            jac_i[s, 1] = q2 * xix - q0 * xiz
            jac_i[s, 2] = q0 * xiy - q1 * xix
            jac_i[s, 3] = -q0
            jac_i[s, 4] = -q1
            jac_i[s, 5] = -q2
    return res, valid, jac_i, jac_j


def cycle_blocks(
    points, depth_j, depth_k, intr_i, intr_j, intr_k,
    rot_i, t_i, rot_j, t_j, rot_kj, t_kj, rot_ik, t_ik, scale, want_jac,
):
    return _cycle_blocks(
        np.ascontiguousarray(points, dtype=np.float64),
        depth_j,
        depth_k,
        np.ascontiguousarray(intr_i, dtype=np.float64),
        np.ascontiguousarray(intr_j, dtype=np.float64),
        np.ascontiguousarray(intr_k, dtype=np.float64),
        np.ascontiguousarray(rot_i, dtype=np.float64),
        np.ascontiguousarray(t_i, dtype=np.float64),
        np.ascontiguousarray(rot_j, dtype=np.float64),
        np.ascontiguousarray(t_j, dtype=np.float64),
        np.ascontiguousarray(rot_kj, dtype=np.float64),
        np.ascontiguousarray(t_kj, dtype=np.float64),
        np.ascontiguousarray(rot_ik, dtype=np.float64),
        np.ascontiguousarray(t_ik, dtype=np.float64),
        float(scale),
        bool(want_jac),
    )


@njit(cache=True)
def _cycle_blocks(
    points, depth_j, depth_k, intr_i, intr_j, intr_k,
    rot_i, t_i, rot_j, t_j, rot_kj, t_kj, rot_ik, t_ik, scale, want_jac,
):
    m = points.shape[0]
    res = np.zeros((m, 2))
    valid = np.zeros(m, dtype=np.bool_)
    jac_i = np.zeros((m, 2, 6))
    jac_j = np.zeros((m, 2, 6))
    jac_k = np.zeros((m, 2, 6))

    fxi = intr_i[0]
    fyi = intr_i[1]
    cxi = intr_i[2]
    cyi = intr_i[3]
    wi = intr_i[4]
    hi = intr_i[5]
    fxj = intr_j[0]
    fyj = intr_j[1]
    cxj = intr_j[2]
    cyj = intr_j[3]
    wj = intr_j[4]
    hj = intr_j[5]
    fxk = intr_k[0]
    fyk = intr_k[1]
    cxk = intr_k[2]
    cyk = intr_k[3]
    wk = intr_k[4]
    hk = intr_k[5]

    for s in range(m):
        px = points[s, 0]
        py = points[s, 1]
        pz = points[s, 2]

        # hop 1: world -> camera j, re-anchor to observed depth
        ax = rot_j[0, 0] * px + rot_j[0, 1] * py + rot_j[0, 2] * pz + t_j[0]
        ay = rot_j[1, 0] * px + rot_j[1, 1] * py + rot_j[1, 2] * pz + t_j[1]
        az = rot_j[2, 0] * px + rot_j[2, 1] * py + rot_j[2, 2] * pz + t_j[2]
        if az <= MIN_Z:
            continue
        uj = fxj * ax / az + cxj
        vj = fyj * ay / az + cyj
        if uj < 0.0 or uj > wj - 1.0 or vj < 0.0 or vj > hj - 1.0:
            continue
        dj, guj, gvj, ok = _bilinear(depth_j, uj, vj)
        if not ok:
            continue

        d_a = np.zeros((3, 18))
        d_a[0, 7] = az
        d_a[0, 8] = -ay
        d_a[1, 6] = -az
        d_a[1, 8] = ax
        d_a[2, 6] = ay
        d_a[2, 7] = -ax
        d_a[0, 9] = 1.0
        d_a[1, 10] = 1.0
        d_a[2, 11] = 1.0

        p00 = fxj / az
        p02 = -fxj * ax / (az * az)
        p11 = fyj / az
        p12 = -fyj * ay / (az * az)
        d_uj = np.zeros((2, 18))
        d_dj = np.zeros(18)
        for col in range(18):
            d_uj[0, col] = p00 * d_a[0, col] + p02 * d_a[2, col]
            d_uj[1, col] = p11 * d_a[1, col] + p12 * d_a[2, col]
            d_dj[col] = guj * d_uj[0, col] + gvj * d_uj[1, col]

        xjx = (uj - cxj) * dj / fxj
        xjy = (vj - cyj) * dj / fyj
        xjz = dj
        bu0 = dj / fxj
        bu1 = dj / fyj
        bd0 = (uj - cxj) / fxj
        bd1 = (vj - cyj) / fyj
        d_xj = np.zeros((3, 18))
        for col in range(18):
            d_xj[0, col] = bu0 * d_uj[0, col] + bd0 * d_dj[col]
            d_xj[1, col] = bu1 * d_uj[1, col] + bd1 * d_dj[col]
            d_xj[2, col] = d_dj[col]

        # hop 2: camera j -> camera k, re-anchor again
        bx = rot_kj[0, 0] * xjx + rot_kj[0, 1] * xjy + rot_kj[0, 2] * xjz + t_kj[0]
        by = rot_kj[1, 0] * xjx + rot_kj[1, 1] * xjy + rot_kj[1, 2] * xjz + t_kj[1]
        bz = rot_kj[2, 0] * xjx + rot_kj[2, 1] * xjy + rot_kj[2, 2] * xjz + t_kj[2]
        if bz <= MIN_Z:
            continue
        uk = fxk * bx / bz + cxk
        vk = fyk * by / bz + cyk
        if uk < 0.0 or uk > wk - 1.0 or vk < 0.0 or vk > hk - 1.0:
            continue
        dk, guk, gvk, ok2 = _bilinear(depth_k, uk, vk)
        if not ok2:
            continue

        d_b = np.zeros((3, 18))
        for col in range(18):
            for r in range(3):
                d_b[r, col] = (
                    rot_kj[r, 0] * d_xj[0, col]
                    + rot_kj[r, 1] * d_xj[1, col]
                    + rot_kj[r, 2] * d_xj[2, col]
                )
        for r in range(3):
            d_b[r, 6] += rot_kj[r, 1] * xjz - rot_kj[r, 2] * xjy
            d_b[r, 7] += -rot_kj[r, 0] * xjz + rot_kj[r, 2] * xjx
            d_b[r, 8] += rot_kj[r, 0] * xjy - rot_kj[r, 1] * xjx
            d_b[r, 9] += -rot_kj[r, 0]
            d_b[r, 10] += -rot_kj[r, 1]
            d_b[r, 11] += -rot_kj[r, 2]
        d_b[0, 13] += bz
        d_b[0, 14] += -by
        d_b[1, 12] += -bz
        d_b[1, 14] += bx
        d_b[2, 12] += by
        d_b[2, 13] += -bx
        d_b[0, 15] += 1.0
        d_b[1, 16] += 1.0
        d_b[2, 17] += 1.0

        q00 = fxk / bz
        q02 = -fxk * bx / (bz * bz)
        q11 = fyk / bz
        q12 = -fyk * by / (bz * bz)
        d_uk = np.zeros((2, 18))
        d_dk = np.zeros(18)
        for col in range(18):
            d_uk[0, col] = q00 * d_b[0, col] + q02 * d_b[2, col]
            d_uk[1, col] = q11 * d_b[1, col] + q12 * d_b[2, col]
            d_dk[col] = guk * d_uk[0, col] + gvk * d_uk[1, col]

        xkx = (uk - cxk) * dk / fxk
        xky = (vk - cyk) * dk / fyk
        xkz = dk
        cu0 = dk / fxk
        cu1 = dk / fyk
        cd0 = (uk - cxk) / fxk
        cd1 = (vk - cyk) / fyk
        d_xk = np.zeros((3, 18))
        for col in range(18):
            d_xk[0, col] = cu0 * d_uk[0, col] + cd0 * d_dk[col]
            d_xk[1, col] = cu1 * d_uk[1, col] + cd1 * d_dk[col]
            d_xk[2, col] = d_dk[col]

        # hop 3: camera k -> camera i, closing projection
        cx_ = rot_ik[0, 0] * xkx + rot_ik[0, 1] * xky + rot_ik[0, 2] * xkz + t_ik[0]
        cy_ = rot_ik[1, 0] * xkx + rot_ik[1, 1] * xky + rot_ik[1, 2] * xkz + t_ik[1]
        cz_ = rot_ik[2, 0] * xkx + rot_ik[2, 1] * xky + rot_ik[2, 2] * xkz + t_ik[2]
        if cz_ <= MIN_Z:
            continue
        ucyc = fxi * cx_ / cz_ + cxi
        vcyc = fyi * cy_ / cz_ + cyi
        if ucyc < 0.0 or ucyc > wi - 1.0 or vcyc < 0.0 or vcyc > hi - 1.0:
            continue

        d_c = np.zeros((3, 18))
        for col in range(18):
            for r in range(3):
                d_c[r, col] = (
                    rot_ik[r, 0] * d_xk[0, col]
                    + rot_ik[r, 1] * d_xk[1, col]
                    + rot_ik[r, 2] * d_xk[2, col]
                )
        for r in range(3):
            d_c[r, 12] += rot_ik[r, 1] * xkz - rot_ik[r, 2] * xky
            d_c[r, 13] += -rot_ik[r, 0] * xkz + rot_ik[r, 2] * xkx
            d_c[r, 14] += rot_ik[r, 0] * xky - rot_ik[r, 1] * xkx
            d_c[r, 15] += -rot_ik[r, 0]
            d_c[r, 16] += -rot_ik[r, 1]
            d_c[r, 17] += -rot_ik[r, 2]
        d_c[0, 1] += cz_
        d_c[0, 2] += -cy_
        d_c[1, 0] += -cz_
        d_c[1, 2] += cx_
        d_c[2, 0] += cy_
        d_c[2, 1] += -cx_
        d_c[0, 3] += 1.0
        d_c[1, 4] += 1.0
        d_c[2, 5] += 1.0

        r00 = fxi / cz_
        r02 = -fxi * cx_ / (cz_ * cz_)
        r11 = fyi / cz_
        r12 = -fyi * cy_ / (cz_ * cz_)

        # reference: direct projection of the world point into camera i
        ex = rot_i[0, 0] * px + rot_i[0, 1] * py + rot_i[0, 2] * pz + t_i[0]
        ey = rot_i[1, 0] * px + rot_i[1, 1] * py + rot_i[1, 2] * pz + t_i[1]
        ez = rot_i[2, 0] * px + rot_i[2, 1] * py + rot_i[2, 2] * pz + t_i[2]
        if ez <= MIN_Z:
            continue
        uref = fxi * ex / ez + cxi
        vref = fyi * ey / ez + cyi

        res[s, 0] = scale * (ucyc - uref)
        res[s, 1] = scale * (vcyc - vref)
        valid[s] = True

        if want_jac:
            s00 = fxi / ez
            s02 = -fxi * ex / (ez * ez)
            s11 = fyi / ez
            s12 = -fyi * ey / (ez * ez)
            d_e = np.zeros((3, 18))
            d_e[0, 1] = ez
            d_e[0, 2] = -ey
            d_e[1, 0] = -ez
            d_e[1, 2] = ex
            d_e[2, 0] = ey
            d_e[2, 1] = -ex
            d_e[0, 3] = 1.0
            d_e[1, 4] = 1.0
            d_e[2, 5] = 1.0
            for col in range(18):
                jrow0 = scale * (
                    (r00 * d_c[0, col] + r02 * d_c[2, col])
                    - (s00 * d_e[0, col] + s02 * d_e[2, col])
                )
                jrow1 = scale * (
                    (r11 * d_c[1, col] + r12 * d_c[2, col])
                    - (s11 * d_e[1, col] + s12 * d_e[2, col])
                )
                if col < 6:
                    jac_i[s, 0, col] = jrow0
                    jac_i[s, 1, col] = jrow1
                elif col < 12:
                    jac_j[s, 0, col - 6] = jrow0
                    jac_j[s, 1, col - 6] = jrow1
                else:
                    jac_k[s, 0, col - 12] = jrow0
                    jac_k[s, 1, col - 12] = jrow1

    return res, valid, jac_i, jac_j, jac_k
