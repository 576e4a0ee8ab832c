import numpy as np
import pytest

from scaleview.geometry import CameraIntrinsics


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def K_small():
    return CameraIntrinsics(20.0, 22.0, 7.5, 5.5, 16, 12)
