"""SO(3)/SE(3) primitives, pinhole projection, and bilinear depth sampling.

Conventions (fixed for the whole package):

* An extrinsic ``T`` maps world coordinates to camera coordinates:
  ``X_cam = R @ X_world + t``.
* Tangent vectors are ``(omega, v)`` with the rotational part first;
  ``exp_se3`` uses the closed-form Rodrigues rotation and the SE(3)
  V-matrix for the translation.
* Integer pixel coordinates are pixel centers; depth maps are row-major
  ``(height, width)`` arrays with row 0 at the top, values in meters.
  A depth value is valid iff it is finite and > 0.

All types are immutable values and all functions are pure, so everything
here is safe to call from any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleNearPi, BehindCamera, NonPositiveDepth

SMALL_ANGLE = 1e-8          # below this, series expansions replace closed forms
LOG_DOMAIN_MARGIN = 1e-6    # log is defined for rotation angles < pi - this
MIN_PROJECT_Z = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """3x3 cross-product matrix of a 3-vector."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula; exact identity for omega = 0."""
    omega = np.asarray(omega, dtype=float)
    theta = math.sqrt(float(omega @ omega))
    w = skew(omega)
    w2 = w @ w
    if theta < SMALL_ANGLE:
        return np.eye(3) + w + 0.5 * w2
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * w + b * w2


def so3_log(rotation: np.ndarray) -> np.ndarray:
    """Rotation vector of a rotation matrix.

    Raises AngleNearPi when the rotation angle is >= pi - 1e-6; the axis
    is ill-conditioned there and callers are expected to stay away from
    that boundary.
    """
    r = np.asarray(rotation, dtype=float)
    vee = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    # atan2 form keeps the angle well conditioned for small rotations,
    # where acos of the trace loses half the significant digits.
    s = float(np.linalg.norm(vee))
    c = 0.5 * (float(np.trace(r)) - 1.0)
    theta = math.atan2(s, c)
    if theta >= math.pi - LOG_DOMAIN_MARGIN:
        raise AngleNearPi(f"rotation angle {theta:.9f} is within 1e-6 of pi")
    if theta < SMALL_ANGLE:
        return vee
    return (theta / s) * vee


def nearest_rotation(matrix: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (polar decomposition via SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def rotation_defect(matrix: np.ndarray) -> float:
    """Max entrywise deviation of R^T R from I, plus |det - 1|."""
    r = np.asarray(matrix, dtype=float)
    ortho = float(np.abs(r.T @ r - np.eye(3)).max())
    return max(ortho, abs(float(np.linalg.det(r)) - 1.0))


@dataclass(frozen=True)
class TangentVector:
    """se(3) element: rotational part ``omega`` (radians), translational ``v`` (meters)."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))

    @staticmethod
    def zero() -> "TangentVector":
        return TangentVector(np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3): ``apply(X) = rotation @ X + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "rotation", np.ascontiguousarray(self.rotation, dtype=float).reshape(3, 3)
        )
        object.__setattr__(
            self, "translation", np.ascontiguousarray(self.translation, dtype=float).reshape(3)
        )

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, point: np.ndarray) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        return p @ self.rotation.T + self.translation

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """(a o b): first apply b, then a."""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


def relative_transform(t_i: RigidTransform, t_j: RigidTransform) -> RigidTransform:
    """Transform taking camera-i coordinates to camera-j coordinates."""
    return compose(t_j, inverse(t_i))


def _v_matrix(omega: np.ndarray, theta: float) -> np.ndarray:
    w = skew(omega)
    w2 = w @ w
    if theta < SMALL_ANGLE:
        return np.eye(3) + 0.5 * w + w2 / 6.0
    b = (1.0 - math.cos(theta)) / (theta * theta)
    c = (theta - math.sin(theta)) / (theta * theta * theta)
    return np.eye(3) + b * w + c * w2


def _v_matrix_inv(omega: np.ndarray, theta: float) -> np.ndarray:
    w = skew(omega)
    w2 = w @ w
    # The closed form loses ~4e-16/theta^4 to cancellation in (1 - cos);
    # below 0.05 rad the two-term series is accurate to ~1e-12.
    if theta < 0.05:
        a = 1.0 / 12.0 + theta * theta / 720.0
    else:
        a = (1.0 / (theta * theta)) * (
            1.0 - (theta * math.sin(theta)) / (2.0 * (1.0 - math.cos(theta)))
        )
    return np.eye(3) - 0.5 * w + a * w2


def exp_se3(xi: TangentVector) -> RigidTransform:
    """Closed-form SE(3) exponential; exp(0) is the identity exactly."""
    theta = math.sqrt(float(xi.omega @ xi.omega))
    rotation = so3_exp(xi.omega)
    translation = _v_matrix(xi.omega, theta) @ xi.v
    return RigidTransform(rotation, translation)


def log_se3(t: RigidTransform) -> TangentVector:
    """Inverse of exp_se3 for rotation angles < pi - 1e-6."""
    omega = so3_log(t.rotation)
    theta = math.sqrt(float(omega @ omega))
    v = _v_matrix_inv(omega, theta) @ t.translation
    return TangentVector(omega, v)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0.0 <= self.cx < self.width and 0.0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")


def project(intr: CameraIntrinsics, point_cam: np.ndarray) -> np.ndarray:
    """Pixel of a camera-frame point; raises BehindCamera for z <= 1e-9."""
    x, y, z = np.asarray(point_cam, dtype=float)
    if z <= MIN_PROJECT_Z:
        raise BehindCamera(f"point depth {z} is not positive")
    return np.array([intr.fx * x / z + intr.cx, intr.fy * y / z + intr.cy])


def backproject(intr: CameraIntrinsics, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Camera-frame point of a pixel at the given depth (z-coordinate)."""
    if depth <= 0.0:
        raise NonPositiveDepth(f"depth {depth} is not positive")
    u, v = np.asarray(pixel, dtype=float)
    return np.array(
        [(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth]
    )


def in_bounds(pixel: np.ndarray, width: int, height: int) -> bool:
    u, v = pixel
    return 0.0 <= u <= width - 1 and 0.0 <= v <= height - 1


def sample_depth(depth_map: np.ndarray, pixel: np.ndarray) -> float:
    """Bilinear depth at a continuous pixel; NaN when the sample is invalid.

    Invalid means: out of bounds, or any of the 4 neighboring pixel
    centers holds a non-finite or non-positive value.
    """
    value, _, _, valid = sample_depth_with_gradient(depth_map, pixel)
    return value if valid else math.nan


def sample_depth_with_gradient(depth_map: np.ndarray, pixel: np.ndarray):
    """Bilinear value and (d/du, d/dv) gradient; returns (val, gu, gv, valid)."""
    h, w = depth_map.shape
    u, v = float(pixel[0]), float(pixel[1])
    if not (0.0 <= u <= w - 1 and 0.0 <= v <= h - 1) or w < 2 or h < 2:
        return math.nan, 0.0, 0.0, False
    x0 = min(int(math.floor(u)), w - 2)
    y0 = min(int(math.floor(v)), h - 2)
    au = u - x0
    av = v - y0
    d00 = depth_map[y0, x0]
    d10 = depth_map[y0, x0 + 1]
    d01 = depth_map[y0 + 1, x0]
    d11 = depth_map[y0 + 1, x0 + 1]
    for d in (d00, d10, d01, d11):
        if not (math.isfinite(d) and d > 0.0):
            return math.nan, 0.0, 0.0, False
    value = (1.0 - av) * ((1.0 - au) * d00 + au * d10) + av * ((1.0 - au) * d01 + au * d11)
    gu = (1.0 - av) * (d10 - d00) + av * (d11 - d01)
    gv = (1.0 - au) * (d01 - d00) + au * (d11 - d10)
    return float(value), float(gu), float(gv), True
