import numpy as np
import pytest

from blochspec.fixtures import (
    constant_coefficient,
    free_operator,
    perturbed_operator,
    skew_coupling_operator,
)


@pytest.fixture(scope="session")
def free_op():
    return free_operator()


@pytest.fixture(scope="session")
def free_op_m2():
    return free_operator(m=2)


@pytest.fixture(scope="session")
def const_op():
    return constant_coefficient((0.0, 1.0))


@pytest.fixture(scope="session")
def perturbed_op():
    return perturbed_operator(eps=1e-2)


@pytest.fixture(scope="session")
def skew_op():
    return skew_coupling_operator(eps=0.05)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
