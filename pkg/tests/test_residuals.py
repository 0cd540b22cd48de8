"""Depth-transfer and cycle residuals: oracle checks, validity, invariants."""

import math

import numpy as np
import pytest
from helpers import (
    cycle_chain_oracle,
    frontal_wall_rig,
    precision_rig_config,
    rig_from_poses,
    small_intrinsics,
)

from rigcal.errors import ConfigError, DegenerateProblem, NoValidPixels
from rigcal.geometry import TangentVector, compose, exp_se3, inverse
from rigcal.residuals import (
    ObjectiveConfig,
    SampledPoint,
    canonical_triplets,
    cycle_residual,
    draw_samples,
    evaluate_objective,
    geo_residual,
    ordered_pairs,
    sample_cycle_points,
    sample_geo_correspondences,
    total_objective,
)
from rigcal.simulator import NoiseModel, Scene, generate_dataset, look_at_extrinsic


@pytest.fixture(scope="module")
def precision_rig():
    scene, layout = precision_rig_config()
    return generate_dataset(layout, scene, NoiseModel(seed=0))


def perturb(extrinsics, cam, omega=(0, 0, 0), v=(0, 0, 0)):
    out = list(extrinsics)
    out[cam] = compose(exp_se3(TangentVector(np.asarray(omega, float), np.asarray(v, float))), out[cam])
    return out


class TestPairAndTripletSets:
    def test_ordered_pairs(self):
        assert ordered_pairs(3) == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]

    def test_canonical_triplets(self):
        assert canonical_triplets(4) == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        assert canonical_triplets(2) == []

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ObjectiveConfig(lam=-1.0).validate()
        with pytest.raises(ConfigError):
            ObjectiveConfig(enable_rc=False, enable_mc=False).validate()
        with pytest.raises(ConfigError):
            ObjectiveConfig(geo_points_per_pair=0).validate()
        with pytest.raises(ConfigError):
            ObjectiveConfig(triplets=((1, 0, 2),)).validate(3)
        with pytest.raises(ConfigError):
            ObjectiveConfig(pairs=((0, 5),)).validate(3)


class TestSampling:
    def test_exact_count_on_fully_valid_map(self, bench_rig_noiseless):
        cfg = ObjectiveConfig(geo_points_per_pair=4, seed=5)
        samples = sample_geo_correspondences(bench_rig_noiseless, cfg)
        assert len(samples) == 12
        for _, uv in samples:
            assert uv.shape == (4, 2)

    def test_deterministic(self, bench_rig_noiseless):
        cfg = ObjectiveConfig(geo_points_per_pair=16, seed=5)
        a = sample_geo_correspondences(bench_rig_noiseless, cfg)
        b = sample_geo_correspondences(bench_rig_noiseless, cfg)
        for (pa, ua), (pb, ub) in zip(a, b):
            assert pa == pb
            assert np.array_equal(ua, ub)

    def test_fully_invalid_map_raises(self, bench_rig_noiseless):
        import copy

        rig = copy.deepcopy(bench_rig_noiseless)
        rig.cameras[0].depth = np.full_like(rig.cameras[0].depth, np.nan)
        cfg = ObjectiveConfig(geo_points_per_pair=8, seed=5)
        with pytest.raises(NoValidPixels):
            sample_geo_correspondences(rig, cfg)

    def test_cycle_points_land_on_surfaces(self, precision_rig):
        from helpers import precision_rig_config, scene_free_sdf

        scene, _ = precision_rig_config()
        gt = precision_rig.gt_extrinsics()
        cfg = ObjectiveConfig(cycle_points=8, seed=7)
        pts = sample_cycle_points(precision_rig, gt, (0, 1, 2), cfg)
        assert len(pts) == 8
        world = np.stack([p.world_point for p in pts])
        assert np.abs(scene_free_sdf(scene, world)).max() < 1e-6

    def test_cycle_points_deterministic(self, bench_rig_noiseless):
        gt = bench_rig_noiseless.gt_extrinsics()
        cfg = ObjectiveConfig(cycle_points=8, seed=7)
        a = sample_cycle_points(bench_rig_noiseless, gt, (0, 1, 2), cfg)
        b = sample_cycle_points(bench_rig_noiseless, gt, (0, 1, 2), cfg)
        assert all(np.array_equal(x.world_point, y.world_point) for x, y in zip(a, b))


class TestGeoResidual:
    def test_zero_at_ground_truth(self, precision_rig):
        gt = precision_rig.gt_extrinsics()
        cfg = ObjectiveConfig(geo_points_per_pair=64, cycle_points=32, seed=0)
        geo, cyc = draw_samples(precision_rig, gt, cfg)
        ev = evaluate_objective(precision_rig, gt, cfg, geo, cyc)
        assert ev.n_geo_valid > 200 and ev.n_cycle_valid > 10
        for g in ev.geo_groups:
            assert np.abs(g.residual[g.valid]).max(initial=0.0) < 1e-6
        for g in ev.cycle_groups:
            if g.valid.any():
                assert np.abs(g.residual[g.valid]).max() < 1e-6

    def test_z_translation_of_target_camera(self):
        # cameras 0.4 m apart facing a wall 3 m away; pushing camera 1 by
        # +0.1 m along its optical axis (left-multiplied) makes transferred
        # points read 0.1 m deeper than the observed wall
        scene, rig = frontal_wall_rig(n_cameras=2)
        extr = perturb(rig.gt_extrinsics(), cam=1, v=(0.0, 0.0, 0.1))
        block = geo_residual(rig, extr, (0, 1), [79.5, 59.5])
        assert block.valid
        assert block.residual[0] == pytest.approx(0.1, abs=1e-9)

    def test_occluded_point_measures_surface_gap(self):
        # Camera 0 (at y=-0.8) sees the wall x=3 straight ahead at its
        # principal pixel: anchor point P = (3, -0.8, 1.5). Camera 1 sits
        # at (0, 0.8, 1.5); its ray toward P crosses x=2 at y = -0.267,
        # inside a full-height box slab spanning x in [2, 2.2], y in
        # [-0.5, -0.1]. The slab's frontal face has constant depth 2.0 in
        # camera 1, so the residual is the inter-surface gap 3.0 - 2.0.
        obstacles = {"boxes": [[2.0, -0.5, 0.0, 2.2, -0.1, 3.0]]}
        scene, rig = frontal_wall_rig(n_cameras=2, spacing=1.6, obstacles=obstacles)
        gt = rig.gt_extrinsics()
        point = np.array([3.0, -0.8, 1.5])
        cam1_center = np.array([0.0, 0.8, 1.5])
        ray = point - cam1_center
        y_at_face = cam1_center[1] + ray[1] * (2.0 - cam1_center[0]) / ray[0]
        assert -0.5 < y_at_face < -0.1  # the slab really occludes the transfer
        z_wall, z_slab = 3.0, 2.0
        block = geo_residual(rig, gt, (0, 1), [79.5, 59.5])
        assert block.valid
        assert block.residual[0] == pytest.approx(z_wall - z_slab, abs=1e-6)

    def test_monotone_sensitivity_frontal_wall(self):
        scene, rig = frontal_wall_rig(n_cameras=2)
        gt = rig.gt_extrinsics()
        values = []
        for delta in np.linspace(0.0, 0.2, 11):
            extr = perturb(gt, cam=1, v=(0.0, 0.0, delta))
            block = geo_residual(rig, extr, (0, 1), [79.5, 59.5])
            assert block.valid
            values.append(abs(float(block.residual[0])))
        diffs = np.diff(values)
        assert np.all(diffs > -1e-12)
        assert values[-1] > values[0]

    def test_invalid_when_behind_camera(self, bench_rig_noiseless):
        gt = bench_rig_noiseless.gt_extrinsics()
        # pull camera 1's frame 50 m forward so transferred points get
        # negative depth in it
        extr = perturb(gt, cam=1, v=(0.0, 0.0, -50.0))
        block = geo_residual(bench_rig_noiseless, extr, (0, 1), [159.5, 119.5])
        assert not block.valid
        assert np.all(block.residual == 0.0)


class TestCycleResidual:
    def test_zero_at_ground_truth_small_rig(self, precision_rig):
        gt = precision_rig.gt_extrinsics()
        cfg = ObjectiveConfig(cycle_points=16, seed=2)
        pts = sample_cycle_points(precision_rig, gt, (0, 1, 2), cfg)
        n_valid = 0
        for p in pts:
            block = cycle_residual(precision_rig, gt, (0, 1, 2), p, cfg)
            if block.valid:
                n_valid += 1
                assert np.abs(block.residual).max() < 1e-6
        assert n_valid > 0

    def test_two_camera_rig_has_no_cycle_terms(self):
        scene, rig = frontal_wall_rig(n_cameras=2)
        gt = rig.gt_extrinsics()
        l_geo, l_cycle, total, blocks = total_objective(rig, gt, ObjectiveConfig(seed=1))
        assert l_cycle == 0.0
        assert all(b.kind == "geo" for b in blocks)

    def test_matches_scalar_chain_oracle(self):
        scene, rig = frontal_wall_rig(n_cameras=3, spacing=0.5)
        gt = rig.gt_extrinsics()
        extr = perturb(gt, cam=1, omega=(0.0, math.radians(1.0), 0.0))
        cfg = ObjectiveConfig(cycle_points=12, seed=4)
        pts = sample_cycle_points(rig, extr, (0, 1, 2), cfg)
        checked = 0
        for p in pts:
            block = cycle_residual(rig, extr, (0, 1, 2), p, cfg)
            want = cycle_chain_oracle(rig, extr, (0, 1, 2), p.world_point)
            if block.valid:
                assert want is not None
                np.testing.assert_allclose(block.residual, want, atol=1e-9)
                checked += 1
            else:
                assert want is None
        assert checked >= 6

    def test_focal_normalization_flag(self):
        scene, rig = frontal_wall_rig(n_cameras=3, spacing=0.5)
        gt = rig.gt_extrinsics()
        extr = perturb(gt, cam=2, omega=(0.0, 0.005, 0.0))
        cfg_on = ObjectiveConfig(cycle_points=6, seed=4)
        cfg_off = ObjectiveConfig(cycle_points=6, seed=4, normalize_pixel_residuals=False)
        pts = sample_cycle_points(rig, extr, (0, 1, 2), cfg_on)
        fx = rig.cameras[0].intrinsics.fx
        for p in pts[:3]:
            on = cycle_residual(rig, extr, (0, 1, 2), p, cfg_on)
            off = cycle_residual(rig, extr, (0, 1, 2), p, cfg_off)
            if on.valid:
                np.testing.assert_allclose(on.residual * fx, off.residual, rtol=1e-12)


class TestTotalObjective:
    def test_lambda_zero_keeps_cycle_reported_but_unweighted(self, bench_rig_perturbed):
        extr = bench_rig_perturbed.init_extrinsics()
        cfg = ObjectiveConfig(lam=0.0, geo_points_per_pair=32, cycle_points=16, seed=6)
        l_geo, l_cycle, total, _ = total_objective(bench_rig_perturbed, extr, cfg)
        assert l_cycle > 0.0
        assert total == l_geo

    def test_sum_matches_per_block_recompute(self, bench_rig_perturbed):
        extr = bench_rig_perturbed.init_extrinsics()
        cfg = ObjectiveConfig(geo_points_per_pair=16, cycle_points=8, seed=6)
        l_geo, l_cycle, total, blocks = total_objective(bench_rig_perturbed, extr, cfg)
        geo_sum = math.fsum(
            float(b.residual @ b.residual) for b in blocks if b.kind == "geo" and b.valid
        )
        cyc_sum = math.fsum(
            float(b.residual @ b.residual) for b in blocks if b.kind == "cycle" and b.valid
        )
        assert geo_sum == pytest.approx(l_geo, rel=1e-12)
        assert cyc_sum == pytest.approx(l_cycle, rel=1e-12)
        assert total == pytest.approx(l_geo + cfg.lam * l_cycle, rel=1e-12)

    def test_disabled_families_are_absent(self, bench_rig_perturbed):
        extr = bench_rig_perturbed.init_extrinsics()
        cfg = ObjectiveConfig(enable_rc=False, geo_points_per_pair=16, cycle_points=8, seed=6)
        l_geo, l_cycle, total, blocks = total_objective(bench_rig_perturbed, extr, cfg)
        assert l_geo == 0.0
        assert all(b.kind == "cycle" for b in blocks)
        cfg = ObjectiveConfig(enable_mc=False, geo_points_per_pair=16, cycle_points=8, seed=6)
        l_geo, l_cycle, total, blocks = total_objective(bench_rig_perturbed, extr, cfg)
        assert l_cycle == 0.0
        assert total == l_geo
        assert all(b.kind == "geo" for b in blocks)

    def test_degenerate_when_nothing_valid(self):
        # two cameras facing opposite walls share nothing
        scene = Scene(room_min=[-3, -3, 0], room_max=[3, 3, 3])
        intr = small_intrinsics(fov_mult=1.2)
        poses = [
            look_at_extrinsic([0.0, 0.0, 1.5], [3.0, 0.0, 1.5]),
            look_at_extrinsic([0.0, 0.0, 1.5], [-3.0, 0.0, 1.5]),
        ]
        rig = rig_from_poses(scene, intr, poses)
        with pytest.raises(DegenerateProblem):
            total_objective(rig, rig.gt_extrinsics(), ObjectiveConfig(seed=1))


class TestGaugeInvariance:
    def test_residuals_invariant_to_world_frame(self, bench_rig_perturbed):
        rig = bench_rig_perturbed
        extr = rig.init_extrinsics()
        gen = np.random.default_rng(40)
        gauge = exp_se3(TangentVector(gen.standard_normal(3), 2.0 * gen.standard_normal(3)))
        moved = [compose(t, inverse(gauge)) for t in extr]

        cfg = ObjectiveConfig(geo_points_per_pair=16, cycle_points=8, seed=3)
        geo_samples = sample_geo_correspondences(rig, cfg)
        for pair, uv in geo_samples[:4]:
            for s in range(uv.shape[0]):
                a = geo_residual(rig, extr, pair, uv[s])
                b = geo_residual(rig, moved, pair, uv[s])
                assert a.valid == b.valid
                np.testing.assert_allclose(a.residual, b.residual, atol=1e-9)

        for triplet in [(0, 1, 2), (0, 2, 3)]:
            pts = sample_cycle_points(rig, extr, triplet, cfg)
            for p in pts[:6]:
                moved_p = SampledPoint(gauge.apply(p.world_point), p.anchor_camera, p.anchor_pixel)
                a = cycle_residual(rig, extr, triplet, p, cfg)
                b = cycle_residual(rig, moved, triplet, moved_p, cfg)
                assert a.valid == b.valid
                np.testing.assert_allclose(a.residual, b.residual, atol=1e-9)
