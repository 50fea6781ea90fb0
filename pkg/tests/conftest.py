import matplotlib

matplotlib.use("Agg")

import numpy as np
import pytest

from utils.channel import DiscreteChannel
from utils.signal_model import SystemConfig


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: large Monte-Carlo checks (deselect with -m 'not slow')")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    """N=16 chips, L=3, one sample per chip."""
    return SystemConfig(N=16, K=1, iota=1, bandwidth=1e9, L=3, noise_var=0.1)


@pytest.fixture
def unit_channel():
    taps = np.array([0.8, -0.5, 0.3, 0.1])
    return DiscreteChannel(taps / np.linalg.norm(taps), 1e-9)
