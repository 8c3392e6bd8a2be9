import numpy as np
import pytest

from pinchopt.channel import Scenario


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def two_device_scenario():
    return Scenario(np.array([[8.0, 1.5], [21.0, -2.0]]), 2, 30.0, 10.0, 3.0).with_power(10.0)


def random_scenario(rng, m, n, power_dbm=10.0, height=3.0, length=30.0, width=10.0):
    dev = np.column_stack([rng.uniform(0, length, m), rng.uniform(-width / 2, width / 2, m)])
    return Scenario(dev, n, length, width, height).with_power(power_dbm)
