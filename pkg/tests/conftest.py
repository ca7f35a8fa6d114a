import numpy as np
import pytest

from reinsure import (
    Discrete,
    Exponential,
    MarketParams,
    ModelSpec,
    PremiumPrinciple,
)


@pytest.fixture
def mkt():
    return MarketParams(
        eta=1.0, rate_r=0.0, horizon_t=1.0, initial_wealth=1.0, theta=0.3, theta_i=0.1
    )


@pytest.fixture
def mkt_r():
    return MarketParams(
        eta=1.0, rate_r=0.05, horizon_t=1.0, initial_wealth=1.0, theta=0.3, theta_i=0.1
    )


@pytest.fixture
def single_state():
    return ModelSpec.build([[0.0]], [2.0], [Exponential(5.0)], initial_state=0)


@pytest.fixture
def single_state_pm():
    return ModelSpec.build([[0.0]], [2.0], [Discrete(((1.0, 1.0),))], initial_state=0)


@pytest.fixture
def two_state():
    # intensities sorted non-decreasing, shared claim law: the comparison setting
    return ModelSpec.build(
        [[-0.5, 0.5], [0.8, -0.8]],
        [1.0, 2.0],
        [Exponential(5.0)] * 2,
        initial_distribution=[0.5, 0.5],
    )


@pytest.fixture
def ev():
    return PremiumPrinciple.EXPECTED_VALUE


@pytest.fixture
def var():
    return PremiumPrinciple.VARIANCE


def random_generator_matrix(rng, m, scale=2.0):
    a = rng.uniform(0.05, scale, (m, m))
    np.fill_diagonal(a, 0.0)
    return a - np.diag(a.sum(axis=1))
