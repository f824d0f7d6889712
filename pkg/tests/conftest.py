import numpy as np
import pytest
import torch

from poselift.camera import CameraIntrinsics
from poselift.skeleton import default_skeleton


@pytest.fixture
def skel():
    return default_skeleton()


@pytest.fixture
def cam():
    return CameraIntrinsics(fx=1000.0, fy=1000.0, cx=500.0, cy=500.0,
                            width=1000, height=1000)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


@pytest.fixture
def torch_rng():
    g = torch.Generator()
    g.manual_seed(1234)
    return g


def random_pose3d_coords(rng, T, J, depth=4000.0, extent=400.0):
    """Random cloud of joints around a point in front of the camera."""
    base = np.array([0.0, 0.0, depth])
    return base + rng.uniform(-extent, extent, size=(T, J, 3))
