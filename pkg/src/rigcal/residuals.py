"""The two loss families and the joint objective.

* Depth-transfer (reprojection-consistency) residuals: a pixel with valid
  depth in camera i is lifted to 3D, moved into camera j, and its
  z-coordinate is compared against camera j's observed depth at the
  projected pixel. One scalar residual per sampled pixel, in meters.

* Triplet cycle residuals: a world point anchored in camera i is pushed
  through cameras j and k, re-anchored to each observed depth map along
  the way, then projected back into camera i and compared against the
  point's direct projection. One 2-vector residual per sampled point, in
  pixels divided by fx_i when ``normalize_pixel_residuals`` is on (which
  makes the two families dimensionally comparable, so the cycle weight
  defaults to 1).

Joint objective: ``L = L_geo + lam * L_cycle``. Invalid blocks (behind a
camera, out of bounds, invalid depth) contribute zero residual and zero
Jacobian. Jacobians are analytic, taken with respect to left-multiplied
tangent perturbations of each involved camera, and differentiate through
the bilinear depth interpolation.

Block evaluation is embarrassingly parallel; reduction happens in
deterministic block-index order (pairs in graph order, then triplets,
sample order within each group) regardless of how evaluation is run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .dataset import CameraRig
from .errors import ConfigError, DegenerateProblem, NoValidPixels
from .geometry import RigidTransform, compose, inverse
from .rng import STREAM_CYCLE_SAMPLING, STREAM_GEO_SAMPLING, pair_index, substream, triplet_index


@dataclass(frozen=True)
class ObjectiveConfig:
    """Loss weights, constraint toggles, and sampling budgets."""

    lam: float = 1.0                      # weight on the cycle term
    enable_rc: bool = True                # depth-transfer (reprojection) residuals
    enable_mc: bool = True                # triplet cycle residuals
    geo_points_per_pair: int = 256
    cycle_points: int = 128
    pairs: tuple | None = None            # None: all ordered pairs
    triplets: tuple | None = None         # None: all canonical triples i<j<k
    normalize_pixel_residuals: bool = True
    huber_delta: float | None = None      # optional robust threshold, residual units
    seed: int = 0

    def validate(self, n_cameras: int | None = None) -> None:
        if self.lam < 0.0:
            raise ConfigError("lam must be >= 0")
        if not (self.enable_rc or self.enable_mc):
            raise ConfigError("at least one constraint family must be enabled")
        if self.geo_points_per_pair < 1 or self.cycle_points < 1:
            raise ConfigError("sampling budgets must be >= 1")
        if self.huber_delta is not None and self.huber_delta <= 0.0:
            raise ConfigError("huber_delta must be positive when set")
        if n_cameras is not None:
            for i, j in self.pair_graph(n_cameras):
                if not (0 <= i < n_cameras and 0 <= j < n_cameras and i != j):
                    raise ConfigError(f"invalid pair ({i}, {j}) for {n_cameras} cameras")
            trips = self.triplet_set(n_cameras)
            if len(set(trips)) != len(trips):
                raise ConfigError("duplicate triplet")
            for i, j, k in trips:
                if len({i, j, k}) != 3 or not all(0 <= c < n_cameras for c in (i, j, k)):
                    raise ConfigError(f"invalid triplet ({i}, {j}, {k})")
                if i != min(i, j, k):
                    raise ConfigError(f"triplet ({i}, {j}, {k}) must be anchored at its smallest id")

    def pair_graph(self, n_cameras: int) -> list[tuple[int, int]]:
        if self.pairs is not None:
            return [tuple(p) for p in self.pairs]
        return ordered_pairs(n_cameras)

    def triplet_set(self, n_cameras: int) -> list[tuple[int, int, int]]:
        if self.triplets is not None:
            return [tuple(t) for t in self.triplets]
        return canonical_triplets(n_cameras)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pairs"] = None if self.pairs is None else [list(p) for p in self.pairs]
        d["triplets"] = None if self.triplets is None else [list(t) for t in self.triplets]
        return d


def ordered_pairs(n_cameras: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n_cameras) for j in range(n_cameras) if i != j]


def canonical_triplets(n_cameras: int) -> list[tuple[int, int, int]]:
    """All unordered triples, anchored at the smallest id, cycled i->j->k->i."""
    return [
        (i, j, k)
        for i in range(n_cameras)
        for j in range(i + 1, n_cameras)
        for k in range(j + 1, n_cameras)
    ]


@dataclass(frozen=True)
class SampledPoint:
    """World point anchored at a valid-depth pixel of one camera."""

    world_point: np.ndarray
    anchor_camera: int
    anchor_pixel: np.ndarray


@dataclass
class ResidualBlock:
    """One evaluated summand of either loss family."""

    kind: str                      # "geo" | "cycle"
    cameras: tuple
    residual: np.ndarray           # (1,) meters for geo, (2,) scaled pixels for cycle
    valid: bool
    jacobian: dict[int, np.ndarray] | None = None   # camera id -> (dim, 6) rows


@dataclass
class GeoGroup:
    pair: tuple[int, int]
    pixels: np.ndarray             # (m, 2)
    residual: np.ndarray           # (m,)
    valid: np.ndarray              # (m,) bool
    weight: np.ndarray | None      # (m,) robust weights, None when huber is off
    jac_i: np.ndarray | None       # (m, 6)
    jac_j: np.ndarray | None


@dataclass
class CycleGroup:
    triplet: tuple[int, int, int]
    points: np.ndarray             # (s, 3) world
    anchor_pixels: np.ndarray      # (s, 2)
    residual: np.ndarray           # (s, 2)
    valid: np.ndarray
    weight: np.ndarray | None
    jac_i: np.ndarray | None       # (s, 2, 6)
    jac_j: np.ndarray | None
    jac_k: np.ndarray | None


@dataclass
class ObjectiveEval:
    l_geo: float
    l_cycle: float
    total: float
    n_geo_valid: int
    n_cycle_valid: int
    geo_groups: list = field(default_factory=list)
    cycle_groups: list = field(default_factory=list)


def _intrinsics_vec(intr) -> np.ndarray:
    return np.array([intr.fx, intr.fy, intr.cx, intr.cy, float(intr.width), float(intr.height)])


def _jittered_grid(gen: np.random.Generator, count: int, width: int, height: int) -> np.ndarray:
    """``count`` pixels on a jittered uniform grid over the bilinear-valid domain."""
    aspect = width / height
    gx = max(1, math.ceil(math.sqrt(count * aspect)))
    gy = max(1, math.ceil(count / gx))
    jitter = gen.random((count, 2))
    idx = np.arange(count)
    ix = idx % gx
    iy = idx // gx
    u = (ix + jitter[:, 0]) * (width - 1) / gx
    v = (iy + jitter[:, 1]) * (height - 1) / max(gy, 1)
    return np.stack([u, v], axis=1)


def _valid_depth_mask(depth: np.ndarray) -> np.ndarray:
    return np.isfinite(depth) & (depth > 0.0)


def _sample_valid_pixels(rig: CameraRig, cam: int, count: int, gen) -> np.ndarray:
    """Jittered-grid pixels of one camera, filtered to valid bilinear depth."""
    intr = rig.cameras[cam].intrinsics
    depth = rig.cameras[cam].depth
    uv = _jittered_grid(gen, count, intr.width, intr.height)
    _, _, _, ok = kernels.active().bilinear_batch(depth, uv)
    if not ok.any() and not _valid_depth_mask(depth).any():
        raise NoValidPixels(f"camera {cam}: depth map has no valid pixels")
    return uv[ok]


def sample_geo_correspondences(rig: CameraRig, cfg: ObjectiveConfig, outer_iter: int = 0):
    """Seeded pixel draws per ordered pair: list of ((i, j), pixels (m, 2))."""
    out = []
    for i, j in cfg.pair_graph(rig.n_cameras):
        gen = substream(cfg.seed, STREAM_GEO_SAMPLING, pair_index(outer_iter, i, j))
        uv = _sample_valid_pixels(rig, i, cfg.geo_points_per_pair, gen)
        out.append(((i, j), uv))
    return out


def sample_cycle_points(
    rig: CameraRig,
    extrinsics: list[RigidTransform],
    triplet: tuple[int, int, int],
    cfg: ObjectiveConfig,
    outer_iter: int = 0,
) -> list[SampledPoint]:
    """World points lifted from the anchor camera's depth at the current extrinsics."""
    i, j, k = triplet
    gen = substream(cfg.seed, STREAM_CYCLE_SAMPLING, triplet_index(outer_iter, i, j, k))
    uv = _sample_valid_pixels(rig, i, cfg.cycle_points, gen)
    intr = rig.cameras[i].intrinsics
    depth, _, _, _ = kernels.active().bilinear_batch(rig.cameras[i].depth, uv)
    cam_pts = np.stack(
        [
            (uv[:, 0] - intr.cx) * depth / intr.fx,
            (uv[:, 1] - intr.cy) * depth / intr.fy,
            depth,
        ],
        axis=1,
    )
    t_inv = inverse(extrinsics[i])
    world = cam_pts @ t_inv.rotation.T + t_inv.translation
    return [SampledPoint(world[s], i, uv[s]) for s in range(uv.shape[0])]


def _cycle_scale(cfg: ObjectiveConfig, intr_i) -> float:
    return 1.0 / intr_i.fx if cfg.normalize_pixel_residuals else 1.0


def _huber_weights(norms: np.ndarray, delta: float | None) -> np.ndarray | None:
    if delta is None:
        return None
    w = np.ones_like(norms)
    over = norms > delta
    w[over] = delta / norms[over]
    return w


def _eval_geo_group(rig, extrinsics, pair, pixels, cfg, want_jac) -> GeoGroup:
    i, j = pair
    rel = compose(extrinsics[j], inverse(extrinsics[i]))
    res, valid, jac_i, jac_j = kernels.active().geo_blocks(
        pixels,
        rig.cameras[i].depth,
        rig.cameras[j].depth,
        _intrinsics_vec(rig.cameras[i].intrinsics),
        _intrinsics_vec(rig.cameras[j].intrinsics),
        rel.rotation,
        rel.translation,
        want_jac,
    )
    weight = _huber_weights(np.abs(res), cfg.huber_delta)
    return GeoGroup(
        pair=pair,
        pixels=pixels,
        residual=res,
        valid=valid,
        weight=weight,
        jac_i=jac_i if want_jac else None,
        jac_j=jac_j if want_jac else None,
    )


def _eval_cycle_group(rig, extrinsics, triplet, points, anchor_pixels, cfg, want_jac) -> CycleGroup:
    i, j, k = triplet
    rel_kj = compose(extrinsics[k], inverse(extrinsics[j]))
    rel_ik = compose(extrinsics[i], inverse(extrinsics[k]))
    res, valid, jac_i, jac_j, jac_k = kernels.active().cycle_blocks(
        points,
        rig.cameras[j].depth,
        rig.cameras[k].depth,
        _intrinsics_vec(rig.cameras[i].intrinsics),
        _intrinsics_vec(rig.cameras[j].intrinsics),
        _intrinsics_vec(rig.cameras[k].intrinsics),
        extrinsics[i].rotation,
        extrinsics[i].translation,
        extrinsics[j].rotation,
        extrinsics[j].translation,
        rel_kj.rotation,
        rel_kj.translation,
        rel_ik.rotation,
        rel_ik.translation,
        _cycle_scale(cfg, rig.cameras[i].intrinsics),
        want_jac,
    )
    weight = _huber_weights(np.linalg.norm(res, axis=1), cfg.huber_delta)
    return CycleGroup(
        triplet=triplet,
        points=points,
        anchor_pixels=anchor_pixels,
        residual=res,
        valid=valid,
        weight=weight,
        jac_i=jac_i if want_jac else None,
        jac_j=jac_j if want_jac else None,
        jac_k=jac_k if want_jac else None,
    )


def evaluate_objective(
    rig: CameraRig,
    extrinsics: list[RigidTransform],
    cfg: ObjectiveConfig,
    geo_samples,
    cycle_samples,
    want_jac: bool = False,
) -> ObjectiveEval:
    """Evaluate all blocks on the given (already drawn) sample sets."""
    l_geo = 0.0
    l_cycle = 0.0
    n_geo = 0
    n_cycle = 0
    geo_groups = []
    for pair, pixels in geo_samples:
        g = _eval_geo_group(rig, extrinsics, pair, pixels, cfg, want_jac)
        sq = g.residual * g.residual
        if g.weight is not None:
            sq = g.weight * sq
        l_geo += float(np.sum(sq))
        n_geo += int(np.count_nonzero(g.valid))
        geo_groups.append(g)
    cycle_groups = []
    for triplet, points, anchor in cycle_samples:
        g = _eval_cycle_group(rig, extrinsics, triplet, points, anchor, cfg, want_jac)
        sq = np.sum(g.residual * g.residual, axis=1)
        if g.weight is not None:
            sq = g.weight * sq
        l_cycle += float(np.sum(sq))
        n_cycle += int(np.count_nonzero(g.valid))
        cycle_groups.append(g)
    total = l_geo + cfg.lam * l_cycle
    return ObjectiveEval(
        l_geo=l_geo,
        l_cycle=l_cycle,
        total=total,
        n_geo_valid=n_geo,
        n_cycle_valid=n_cycle,
        geo_groups=geo_groups,
        cycle_groups=cycle_groups,
    )


def draw_samples(rig, extrinsics, cfg: ObjectiveConfig, outer_iter: int = 0):
    """Draw both sample families for one outer (re-linearization) iteration."""
    geo_samples = []
    cycle_samples = []
    if cfg.enable_rc:
        geo_samples = sample_geo_correspondences(rig, cfg, outer_iter)
    if cfg.enable_mc and rig.n_cameras >= 3:
        for triplet in cfg.triplet_set(rig.n_cameras):
            pts = sample_cycle_points(rig, extrinsics, triplet, cfg, outer_iter)
            if pts:
                points = np.stack([p.world_point for p in pts])
                anchor = np.stack([p.anchor_pixel for p in pts])
            else:
                points = np.zeros((0, 3))
                anchor = np.zeros((0, 2))
            cycle_samples.append((triplet, points, anchor))
    return geo_samples, cycle_samples


def total_objective(
    rig: CameraRig,
    extrinsics: list[RigidTransform],
    cfg: ObjectiveConfig,
    with_jacobians: bool = False,
    outer_iter: int = 0,
):
    """(L_geo, L_cycle, L, blocks) on a fresh seeded sample set.

    Disabled families contribute exactly zero and produce no blocks.
    Raises DegenerateProblem when not a single block is valid.
    """
    cfg.validate(rig.n_cameras)
    geo_samples, cycle_samples = draw_samples(rig, extrinsics, cfg, outer_iter)
    ev = evaluate_objective(rig, extrinsics, cfg, geo_samples, cycle_samples, with_jacobians)
    if ev.n_geo_valid + ev.n_cycle_valid == 0:
        raise DegenerateProblem("no valid residual blocks")
    return ev.l_geo, ev.l_cycle, ev.total, blocks_from_eval(ev)


def blocks_from_eval(ev: ObjectiveEval) -> list[ResidualBlock]:
    blocks = []
    for g in ev.geo_groups:
        i, j = g.pair
        for s in range(g.residual.shape[0]):
            jac = None
            if g.jac_i is not None:
                jac = {i: g.jac_i[s].reshape(1, 6), j: g.jac_j[s].reshape(1, 6)}
            blocks.append(
                ResidualBlock(
                    kind="geo",
                    cameras=g.pair,
                    residual=np.array([g.residual[s]]),
                    valid=bool(g.valid[s]),
                    jacobian=jac,
                )
            )
    for g in ev.cycle_groups:
        i, j, k = g.triplet
        for s in range(g.residual.shape[0]):
            jac = None
            if g.jac_i is not None:
                jac = {i: g.jac_i[s], j: g.jac_j[s], k: g.jac_k[s]}
            blocks.append(
                ResidualBlock(
                    kind="cycle",
                    cameras=g.triplet,
                    residual=g.residual[s].copy(),
                    valid=bool(g.valid[s]),
                    jacobian=jac,
                )
            )
    return blocks


def geo_residual(rig, extrinsics, pair, pixel, cfg: ObjectiveConfig | None = None,
                 with_jacobian: bool = False) -> ResidualBlock:
    """Single depth-transfer block for one pixel of camera ``pair[0]``."""
    cfg = cfg or ObjectiveConfig()
    pixels = np.asarray(pixel, dtype=float).reshape(1, 2)
    g = _eval_geo_group(rig, extrinsics, tuple(pair), pixels, cfg, with_jacobian)
    return blocks_from_eval(ObjectiveEval(0, 0, 0, 0, 0, [g], []))[0]


def cycle_residual(rig, extrinsics, triplet, point: SampledPoint,
                   cfg: ObjectiveConfig | None = None,
                   with_jacobian: bool = False) -> ResidualBlock:
    """Single cycle block for one sampled world point of a triplet."""
    cfg = cfg or ObjectiveConfig()
    pts = point.world_point.reshape(1, 3)
    anchor = point.anchor_pixel.reshape(1, 2)
    g = _eval_cycle_group(rig, extrinsics, tuple(triplet), pts, anchor, cfg, with_jacobian)
    return blocks_from_eval(ObjectiveEval(0, 0, 0, 0, 0, [], [g]))[0]


def assemble_system(ev: ObjectiveEval, n_cameras: int, gauge_camera: int, lam: float):
    """Stack residuals and Jacobians for the gauge-fixed normal equations.

    Cycle rows are scaled by sqrt(lam) so that ||r||^2 equals the joint
    objective; robust weights (when enabled) enter as sqrt(w). The gauge
    camera contributes no columns. Invalid blocks are zero rows.
    """
    col = {}
    next_col = 0
    for c in range(n_cameras):
        if c != gauge_camera:
            col[c] = next_col
            next_col += 6
    n_rows = sum(g.residual.shape[0] for g in ev.geo_groups)
    n_rows += 2 * sum(g.residual.shape[0] for g in ev.cycle_groups)
    r = np.zeros(n_rows)
    jac = np.zeros((n_rows, 6 * (n_cameras - 1)))
    row = 0
    for g in ev.geo_groups:
        m = g.residual.shape[0]
        scale = np.ones(m) if g.weight is None else np.sqrt(g.weight)
        r[row:row + m] = scale * g.residual
        if g.jac_i is not None:
            i, j = g.pair
            if i != gauge_camera:
                jac[row:row + m, col[i]:col[i] + 6] = scale[:, None] * g.jac_i
            if j != gauge_camera:
                jac[row:row + m, col[j]:col[j] + 6] = scale[:, None] * g.jac_j
        row += m
    sqrt_lam = math.sqrt(lam)
    for g in ev.cycle_groups:
        s = g.residual.shape[0]
        scale = np.full(s, sqrt_lam) if g.weight is None else sqrt_lam * np.sqrt(g.weight)
        r[row:row + 2 * s] = (scale[:, None] * g.residual).reshape(-1)
        if g.jac_i is not None:
            for cam, jblock in ((g.triplet[0], g.jac_i), (g.triplet[1], g.jac_j),
                                (g.triplet[2], g.jac_k)):
                if cam != gauge_camera:
                    jac[row:row + 2 * s, col[cam]:col[cam] + 6] += (
                        (scale[:, None, None] * jblock).reshape(2 * s, 6)
                    )
        row += 2 * s
    return r, jac
