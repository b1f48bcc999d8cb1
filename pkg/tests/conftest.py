import numpy as np
import pytest

from rdlcqr.kernels import KernelSpec
from rdlcqr.montecarlo import DgpSpec, draw_sample


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def triangular():
    return KernelSpec("triangular")


@pytest.fixture(scope="session")
def lee_sample():
    """One fixed draw of the election-calibrated design, n = 500."""
    return draw_sample(DgpSpec(model="lee", dgp=1, n=500), np.random.default_rng(1234))


@pytest.fixture(scope="session")
def fuzzy_sample():
    """One fixed draw of the constructed fuzzy design."""
    spec = DgpSpec(model="lee", dgp=1, n=500, fuzzy_jump=(2 / 7, 6 / 7))
    return draw_sample(spec, np.random.default_rng(77))
