import numpy as np
import pytest
from hypothesis import settings

from hyperips.models import InitialLaw, SI_STATES, build_sis

settings.register_profile("ci", max_examples=40, deadline=None)
settings.load_profile("ci")


def pair(beta=1.0):
    return np.array([[0.0, beta], [beta, 0.0]])


@pytest.fixture
def si_pair():
    """Two-vertex symmetric SI with unit rate."""
    return build_sis(pair(1.0), 0.0)


@pytest.fixture
def sis_triangle():
    R = np.array([[0.0, 0.7, 0.4], [0.7, 0.0, 0.9], [0.4, 0.9, 0.0]])
    return build_sis(R, np.array([0.3, 0.5, 0.2]))


@pytest.fixture
def half_law():
    def make(n, p=0.5):
        return InitialLaw.bernoulli(SI_STATES, n, p)
    return make
