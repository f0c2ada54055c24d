import numpy as np
import pytest

from ftns.catalog import companion_ft3s, wave_ft2s
from ftns.directions import fibonacci_sphere


@pytest.fixture
def rng():
    return np.random.default_rng(20210 + 412)


@pytest.fixture
def small_sample():
    return fibonacci_sphere(40)


@pytest.fixture
def wave():
    return wave_ft2s()


@pytest.fixture
def companion():
    return companion_ft3s()


def random_unit(rng, D=3):
    s = rng.standard_normal(D)
    return s / np.linalg.norm(s)
