import numpy as np
import pytest

from hameng.cspace import build_cspace
from hameng.model import NetworkSpec, closing_segment, ControlSequence, random_sequence


@pytest.fixture(scope="session")
def net3():
    return NetworkSpec.all_to_all(3)


@pytest.fixture(scope="session")
def basis3(net3):
    return build_cspace(net3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def identity_cycle(rng, q=8):
    """Random bounded sequence closed by one segment that undoes its collective rotation."""
    s = random_sequence(rng, q)
    return ControlSequence(s.segments + (closing_segment(s),))
