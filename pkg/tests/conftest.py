import numpy as np
import pytest

from axirmhd.grid import build_grid
from axirmhd.state import ScalingSet


@pytest.fixture(scope="session")
def scaling():
    return ScalingSet.agn_reference()


@pytest.fixture()
def grid_small():
    return build_grid(16, 8, 10.0)


@pytest.fixture()
def grid_stretched():
    return build_grid(24, 10, 50.0, stretch_ratio=1.08)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
