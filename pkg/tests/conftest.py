import numpy as np
import pytest

from astro_tr.oracle import ProblemSpec, make_problem


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running empirical checks")
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


@pytest.fixture
def quad():
    def build(d=2, sigma=1.0, **params):
        return make_problem(ProblemSpec("quad-smooth", d, sigma, parameters=params))

    return build


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
