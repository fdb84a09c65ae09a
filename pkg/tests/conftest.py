import numpy as np
import pytest

from phasekit.fock import OscParams


@pytest.fixture
def params():
    """Matched-width oscillator with m = omega = 1."""
    return OscParams()


@pytest.fixture
def params_wide():
    """Deliberately unmatched frame width."""
    return OscParams(sigma=0.9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
