"""Analytic Jacobians against central finite differences."""

import numpy as np
import pytest
from helpers import frontal_wall_rig

from rigcal.geometry import TangentVector, compose, exp_se3
from rigcal.residuals import (
    ObjectiveConfig,
    assemble_system,
    draw_samples,
    evaluate_objective,
)

FD_STEP = 1e-6
# relative error with an absolute floor: central differences of residuals
# carry ~1e-10 of cancellation noise, far below real Jacobian entries
REL_TOL = 1e-5
ABS_FLOOR = 1e-3


def fd_jacobian(rig, extrinsics, cfg, samples, gauge):
    geo_samples, cycle_samples = samples
    n = rig.n_cameras
    cols = 6 * (n - 1)
    ev0 = evaluate_objective(rig, extrinsics, cfg, geo_samples, cycle_samples)
    r0, _ = assemble_system(ev0, n, gauge, cfg.lam)
    jac = np.zeros((r0.size, cols))
    col = 0
    for cam in range(n):
        if cam == gauge:
            continue
        for k in range(6):
            step = np.zeros(6)
            step[k] = FD_STEP
            plus = list(extrinsics)
            minus = list(extrinsics)
            plus[cam] = compose(exp_se3(TangentVector(step[:3], step[3:])), extrinsics[cam])
            minus[cam] = compose(exp_se3(TangentVector(-step[:3], -step[3:])), extrinsics[cam])
            ev_p = evaluate_objective(rig, plus, cfg, geo_samples, cycle_samples)
            ev_m = evaluate_objective(rig, minus, cfg, geo_samples, cycle_samples)
            r_p, _ = assemble_system(ev_p, n, gauge, cfg.lam)
            r_m, _ = assemble_system(ev_m, n, gauge, cfg.lam)
            jac[:, col * 6 + k] = (r_p - r_m) / (2.0 * FD_STEP)
        col += 1
    return jac


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), ABS_FLOOR)


def perturbed_extrinsics(rig, gen, rot=0.02, trans=0.03):
    out = []
    for cam in rig.cameras:
        xi = TangentVector(rot * gen.standard_normal(3), trans * gen.standard_normal(3))
        out.append(compose(exp_se3(xi), cam.gt_extrinsic))
    return out


class TestAgainstFiniteDifferences:
    @pytest.mark.parametrize("seed", range(6))
    def test_default_rig_random_configurations(self, seed, bench_rig_noiseless):
        rig = bench_rig_noiseless
        gen = np.random.default_rng(1000 + seed)
        extr = perturbed_extrinsics(rig, gen)
        cfg = ObjectiveConfig(geo_points_per_pair=5, cycle_points=4, seed=seed)
        samples = draw_samples(rig, extr, cfg)
        ev = evaluate_objective(rig, extr, cfg, *samples, want_jac=True)
        _, jac = assemble_system(ev, rig.n_cameras, 0, cfg.lam)
        jac_fd = fd_jacobian(rig, extr, cfg, samples, gauge=0)
        assert rel_err(jac, jac_fd).max() < REL_TOL

    def test_geo_blocks_only(self, bench_rig_noiseless):
        rig = bench_rig_noiseless
        gen = np.random.default_rng(2000)
        extr = perturbed_extrinsics(rig, gen)
        cfg = ObjectiveConfig(enable_mc=False, geo_points_per_pair=8, seed=3)
        samples = draw_samples(rig, extr, cfg)
        ev = evaluate_objective(rig, extr, cfg, *samples, want_jac=True)
        _, jac = assemble_system(ev, rig.n_cameras, 0, cfg.lam)
        jac_fd = fd_jacobian(rig, extr, cfg, samples, gauge=0)
        assert rel_err(jac, jac_fd).max() < REL_TOL

    def test_cycle_blocks_only(self, bench_rig_noiseless):
        rig = bench_rig_noiseless
        gen = np.random.default_rng(3000)
        extr = perturbed_extrinsics(rig, gen)
        cfg = ObjectiveConfig(enable_rc=False, cycle_points=16, seed=3)
        samples = draw_samples(rig, extr, cfg)
        ev = evaluate_objective(rig, extr, cfg, *samples, want_jac=True)
        _, jac = assemble_system(ev, rig.n_cameras, 0, cfg.lam)
        jac_fd = fd_jacobian(rig, extr, cfg, samples, gauge=0)
        assert rel_err(jac, jac_fd).max() < REL_TOL

    def test_nondefault_gauge_camera(self, bench_rig_noiseless):
        rig = bench_rig_noiseless
        gen = np.random.default_rng(4000)
        extr = perturbed_extrinsics(rig, gen)
        cfg = ObjectiveConfig(geo_points_per_pair=4, cycle_points=4, seed=9)
        samples = draw_samples(rig, extr, cfg)
        ev = evaluate_objective(rig, extr, cfg, *samples, want_jac=True)
        _, jac = assemble_system(ev, rig.n_cameras, 2, cfg.lam)
        jac_fd = fd_jacobian(rig, extr, cfg, samples, gauge=2)
        assert rel_err(jac, jac_fd).max() < REL_TOL


class TestStructure:
    def test_blocks_have_zero_rows_for_uninvolved_cameras(self, bench_rig_noiseless):
        from rigcal.residuals import total_objective

        rig = bench_rig_noiseless
        extr = rig.init_extrinsics()
        cfg = ObjectiveConfig(geo_points_per_pair=4, cycle_points=4, seed=2)
        _, _, _, blocks = total_objective(rig, extr, cfg, with_jacobians=True)
        for block in blocks:
            assert set(block.jacobian) == set(block.cameras)

    def test_invalid_block_has_zero_jacobian(self, bench_rig_noiseless):
        from rigcal.residuals import geo_residual

        rig = bench_rig_noiseless
        gt = rig.gt_extrinsics()
        extr = list(gt)
        extr[1] = compose(exp_se3(TangentVector([0, 0, 0], [0, 0, -50.0])), extr[1])
        block = geo_residual(rig, extr, (0, 1), [159.5, 119.5], with_jacobian=True)
        assert not block.valid
        assert all(np.all(j == 0.0) for j in block.jacobian.values())

    def test_gauge_camera_contributes_no_columns(self, bench_rig_noiseless):
        rig = bench_rig_noiseless
        extr = rig.init_extrinsics()
        cfg = ObjectiveConfig(geo_points_per_pair=4, cycle_points=4, seed=2)
        samples = draw_samples(rig, extr, cfg)
        ev = evaluate_objective(rig, extr, cfg, *samples, want_jac=True)
        _, jac = assemble_system(ev, rig.n_cameras, 0, cfg.lam)
        assert jac.shape[1] == 6 * (rig.n_cameras - 1)


class TestDepthGradientPath:
    def test_sloped_depth_contributes(self):
        # tilted geometry: the bilinear depth gradient term must appear in
        # the Jacobian, otherwise FD disagrees immediately
        scene, rig = frontal_wall_rig(n_cameras=2)
        gen = np.random.default_rng(5)
        extr = perturbed_extrinsics(rig, gen, rot=0.05, trans=0.05)
        cfg = ObjectiveConfig(geo_points_per_pair=16, seed=1, enable_mc=False)
        samples = draw_samples(rig, extr, cfg)
        ev = evaluate_objective(rig, extr, cfg, *samples, want_jac=True)
        _, jac = assemble_system(ev, rig.n_cameras, 0, cfg.lam)
        jac_fd = fd_jacobian(rig, extr, cfg, samples, gauge=0)
        assert rel_err(jac, jac_fd).max() < REL_TOL
