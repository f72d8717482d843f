import numpy as np
import pytest

from thinobs.acceptance import pinned_solution


@pytest.fixture(scope="session")
def flat_solution():
    return pinned_solution("flat-oracle-2d")


@pytest.fixture(scope="session")
def curved_solution():
    return pinned_solution("curved-M-2d")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
