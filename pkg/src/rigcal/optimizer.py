"""Damped Gauss-Newton (Levenberg-Marquardt) refinement over SE(3)^(N-1).

One camera (``gauge_camera``) is frozen to remove the world-frame
ambiguity of the objective; its extrinsic comes back bit-identical.
The outer loop redraws correspondences and cycle anchor points at the
current extrinsics; the inner loop takes LM steps

    (J^T J + mu * diag(J^T J)) dxi = -J^T r

accepting a step only when the loss decreases, so accepted losses are
non-increasing within an outer iteration. Updates are left-multiplied
tangent steps followed by rotation re-orthonormalization, which keeps
every intermediate extrinsic a valid rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .dataset import CameraRig
from .errors import (
    ConfigError,
    DegenerateProblem,
    NotPositiveDefinite,
    SingularNormalEquations,
)
from .geometry import RigidTransform, TangentVector, compose, exp_se3, nearest_rotation
from .residuals import ObjectiveConfig, assemble_system, draw_samples, evaluate_objective

_MU_MAX = 1e12
# Trust cap on a single LM step (radians / meters per component). Weakly
# observed pose directions otherwise take huge damped-Gauss-Newton steps
# that can tunnel into spurious basins; healthy steps stay far below this.
_STEP_CAP = 0.25


@dataclass(frozen=True)
class OptimizerConfig:
    max_outer_iters: int = 10
    max_inner_iters: int = 20
    lm_lambda0: float = 1e-4
    lm_up: float = 10.0
    lm_down: float = 0.1
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    gauge_camera: int = 0

    def validate(self, n_cameras: int | None = None) -> None:
        if min(self.max_outer_iters, self.max_inner_iters) < 1:
            raise ConfigError("iteration limits must be >= 1")
        if min(self.lm_lambda0, self.lm_up, self.lm_down, self.rel_tol, self.abs_tol) <= 0.0:
            raise ConfigError("damping and tolerance parameters must be positive")
        if self.gauge_camera < 0 or (n_cameras is not None and self.gauge_camera >= n_cameras):
            raise ConfigError(f"gauge_camera {self.gauge_camera} out of range")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptResult:
    extrinsics: list[RigidTransform]
    initial_loss: dict
    final_loss: dict
    outer_iters: int
    inner_iters: int
    termination: str                      # converged | max-iters | degenerate
    n_geo_valid: int
    n_cycle_valid: int
    loss_trace: list[list[float]] = field(default_factory=list)


def solve_normal_equations(jac: np.ndarray, res: np.ndarray, mu: float) -> np.ndarray:
    """Exact solve of the damped normal equations; deterministic.

    Raises NotPositiveDefinite when the damped matrix fails Cholesky,
    which is the caller's cue to increase mu.
    """
    jtj = jac.T @ jac
    a = jtj + mu * np.diag(np.diag(jtj))
    rhs = -(jac.T @ res)
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite("normal equations contain non-finite entries")
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("damped J^T J is not positive definite") from exc
    return np.linalg.solve(a, rhs)


def _apply_step(extrinsics, delta, gauge_camera):
    """Left-multiplied tangent update of every non-gauge camera."""
    out = []
    idx = 0
    for c, t in enumerate(extrinsics):
        if c == gauge_camera:
            out.append(t)
            continue
        xi = TangentVector(delta[idx:idx + 3], delta[idx + 3:idx + 6])
        idx += 6
        stepped = compose(exp_se3(xi), t)
        out.append(RigidTransform(nearest_rotation(stepped.rotation), stepped.translation))
    return out


def _loss_dict(ev) -> dict:
    return {"geo": ev.l_geo, "cycle": ev.l_cycle, "total": ev.total}


def refine(rig: CameraRig, obj_cfg: ObjectiveConfig, opt_cfg: OptimizerConfig) -> OptResult:
    """Minimize the joint objective from the rig's initial extrinsics."""
    obj_cfg.validate(rig.n_cameras)
    opt_cfg.validate(rig.n_cameras)
    n = rig.n_cameras
    if obj_cfg.enable_mc and not obj_cfg.enable_rc and n < 3:
        raise ConfigError("the cycle constraint alone needs at least 3 cameras")

    extr = list(rig.init_extrinsics())
    gauge = opt_cfg.gauge_camera
    initial_loss = None
    final_ev = None
    termination = "max-iters"
    trace: list[list[float]] = []
    outer_done = 0
    inner_total = 0

    for outer in range(opt_cfg.max_outer_iters):
        geo_samples, cycle_samples = draw_samples(rig, extr, obj_cfg, outer_iter=outer)
        ev = evaluate_objective(rig, extr, obj_cfg, geo_samples, cycle_samples, want_jac=True)
        if ev.n_geo_valid + ev.n_cycle_valid == 0:
            raise DegenerateProblem("no valid residual blocks at the current extrinsics")
        if initial_loss is None:
            initial_loss = _loss_dict(ev)
        outer_done = outer + 1
        accepted = [ev.total]
        final_ev = ev

        if ev.total < opt_cfg.abs_tol:
            termination = "converged"
            trace.append(accepted)
            break

        loss_start = ev.total
        loss = ev.total
        res, jac = assemble_system(ev, n, gauge, obj_cfg.lam)
        mu = opt_cfg.lm_lambda0
        hit_abs = False
        for _ in range(opt_cfg.max_inner_iters):
            inner_total += 1
            while True:
                try:
                    delta = solve_normal_equations(jac, res, mu)
                    break
                except NotPositiveDefinite:
                    mu *= opt_cfg.lm_up
                    if mu > _MU_MAX:
                        raise SingularNormalEquations(
                            "normal equations remain indefinite at maximum damping; "
                            "some pose directions are unobservable"
                        ) from None
            largest = float(np.abs(delta).max())
            if largest > _STEP_CAP:
                delta = delta * (_STEP_CAP / largest)
            candidate = _apply_step(extr, delta, gauge)
            ev_c = evaluate_objective(
                rig, candidate, obj_cfg, geo_samples, cycle_samples, want_jac=False
            )
            if ev_c.total < loss:
                drop = loss - ev_c.total
                extr = candidate
                loss = ev_c.total
                accepted.append(loss)
                mu = max(mu * opt_cfg.lm_down, 1e-15)
                ev = evaluate_objective(
                    rig, extr, obj_cfg, geo_samples, cycle_samples, want_jac=True
                )
                final_ev = ev
                res, jac = assemble_system(ev, n, gauge, obj_cfg.lam)
                if loss < opt_cfg.abs_tol:
                    hit_abs = True
                    break
                if drop <= opt_cfg.rel_tol * max(loss, 1e-300):
                    break
            else:
                mu *= opt_cfg.lm_up
                if mu > _MU_MAX:
                    break
        trace.append(accepted)
        if hit_abs:
            termination = "converged"
            break
        if loss_start - loss <= opt_cfg.rel_tol * max(loss_start, 1e-300):
            termination = "converged"
            break

    return OptResult(
        extrinsics=extr,
        initial_loss=initial_loss,
        final_loss=_loss_dict(final_ev),
        outer_iters=outer_done,
        inner_iters=inner_total,
        termination=termination,
        n_geo_valid=final_ev.n_geo_valid,
        n_cycle_valid=final_ev.n_cycle_valid,
        loss_trace=trace,
    )
