import numpy as np
import pytest

from rigcal import kernels
from rigcal.simulator import NoiseModel, default_layout, default_scene, generate_dataset


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the active backend once on tiny inputs so timed tests stay honest."""
    k = kernels.active()
    depth = np.full((8, 8), 2.0)
    uv = np.array([[3.2, 3.7]])
    k.bilinear_batch(depth, uv)
    k.cast_rays(
        np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]),
        np.zeros((1, 4)), np.zeros((1, 6)),
        np.zeros((1, 3)), np.array([[1.0, 0.0, 0.0]]),
    )
    intr = np.array([4.0, 4.0, 3.5, 3.5, 8.0, 8.0])
    k.render_depth(
        np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]),
        np.zeros((0, 4)), np.zeros((0, 6)), intr, np.zeros(3), np.eye(3),
    )
    eye = np.eye(3)
    zero = np.zeros(3)
    for jac in (False, True):
        k.geo_blocks(uv, depth, depth, intr, intr, eye, zero, jac)
        k.cycle_blocks(
            np.array([[0.1, 0.1, 1.0]]), depth, depth, intr, intr, intr,
            eye, zero, eye, zero, eye, zero, eye, zero, 1.0, jac,
        )


@pytest.fixture(scope="session")
def bench_rig_noiseless():
    """Default benchmark rig, exact depth, init = gt."""
    return generate_dataset(default_layout(), default_scene(), NoiseModel(seed=1))


@pytest.fixture(scope="session")
def bench_rig_perturbed():
    """Default benchmark rig, exact depth, perturbed initial extrinsics."""
    noise = NoiseModel(rot_perturb_deg=2.0, trans_perturb_m=0.05, seed=3)
    return generate_dataset(default_layout(), default_scene(), noise)
