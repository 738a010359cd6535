import numpy as np
import pytest

from nesslab.acceptance import benchmark_dot, broad_dot, random_spec


@pytest.fixture
def dot():
    """Narrow single dot with the analytic S(E) benchmark."""
    return benchmark_dot()


@pytest.fixture
def broad():
    """Well-hybridized biased dot used for self-consistent runs."""
    return broad_dot()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_random_spec(rng):
    return random_spec(rng, lam=0.05, equal_reservoirs=False)
