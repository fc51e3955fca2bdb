import numpy as np
import pytest

from pairkin import gaussian_grid
from pairkin.phase import ProfileSpec, make_initial_condition, random_bounded_state


@pytest.fixture(scope="session")
def grid32():
    return gaussian_grid(1, 32, 32, 8.0)


@pytest.fixture(scope="session")
def grid16():
    return gaussian_grid(1, 16, 16, 8.0)


@pytest.fixture(scope="session")
def grid2d():
    return gaussian_grid(2, 16, 8, 8.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cosine_ic(grid32):
    return make_initial_condition(
        ProfileSpec("cosine", base=1.1, amplitude=0.5),
        ProfileSpec("cosine", base=0.9, amplitude=0.2, mode=2),
        grid32, 0.5, 2.0,
    )


def bounded_state(grid, rng, rho_m=0.5, rho_M=2.0):
    return random_bounded_state(grid, rho_m, rho_M, rng)
