import numpy as np
import pytest

from approxrv import fit


@pytest.fixture(scope="session")
def linear_table():
    return fit.fit_gaussian_dyadic(1, 15)


@pytest.fixture(scope="session")
def cubic_table():
    return fit.fit_gaussian_dyadic(3, 15)


@pytest.fixture(scope="session")
def rademacher_table():
    return fit.fit_constant(1, "rademacher")


@pytest.fixture(scope="session")
def constant_q10_table():
    return fit.fit_constant(10, "l1")


@pytest.fixture(scope="session")
def ncchi2_nu1_linear():
    return fit.fit_ncchi2(1.0, n_knots=16, m=1, n_intervals=15)


@pytest.fixture(scope="session")
def ncchi2_nu2_linear():
    return fit.fit_ncchi2(2.0, n_knots=16, m=1, n_intervals=15)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
