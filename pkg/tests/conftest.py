import numpy as np
import pytest

from graspkit.fixtures import fixture_bundle, toy_bundle
from graspkit.retarget import RetargetParams, retarget_trajectory


@pytest.fixture(scope="session")
def toy():
    """(scene, demo trajectory, reference, meta) for the planar toy scene."""
    return toy_bundle()


@pytest.fixture(scope="session")
def fixture():
    """(scene, demo trajectory, reference, human frames, meta) for the
    7-DOF arm + 10-DOF hand scene."""
    return fixture_bundle()


@pytest.fixture(scope="session")
def retargeted(fixture):
    """Retargeted robot trajectory for the synthetic human demonstration."""
    scene, traj, ref, human, meta = fixture
    return retarget_trajectory(
        scene.hand, scene.arm, human, RetargetParams(beta_smooth=0.02),
        mount=scene.mount, dt=traj.dt,
    )


def demo_q_matrix(traj):
    return np.stack([np.concatenate([f.q_arm, f.q_hand]) for f in traj.frames])
