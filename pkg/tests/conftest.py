import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(0))


def make_rng(*seed):
    return np.random.Generator(np.random.PCG64(seed))
