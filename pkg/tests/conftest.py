import numpy as np
import pytest
from hypothesis import settings

from zyglab.field_core import Grid3

settings.register_profile("zyglab", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("zyglab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid8():
    return Grid3.cube(4.0, 8)
